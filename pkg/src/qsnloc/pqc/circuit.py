"""Batched statevector simulation of U3/CU3 circuits with adjoint gradients.

States are arrays of shape ``(B, 2**m)``; qubit 0 is the most significant
bit.  Gates are applied in place by compiled kernels that visit each
amplitude pair once, so no ``2**m`` square matrix is ever built.

Gradients use the adjoint method: after the forward pass the circuit is
undone gate by gate on both the state and the co-state
``λ = Σ_q g_q Z_q |ψ_out>``, and each gate contributes
``2 Re <λ| ∂U |ψ>`` from a 2x2 reduced overlap.
"""
from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from ..errors import DimensionMismatch
from ..qmath import z_signs
from ._kernels import adjoint_sweep, run_gates

U3 = "u3"
CU3 = "cu3"


def u3_matrix(theta: float, phi: float, lam: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([
        [c, -np.exp(1j * lam) * s],
        [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c],
    ])


def u3_matrices(params: np.ndarray) -> np.ndarray:
    """Stack of U3 matrices ``(G, 2, 2)`` for angle rows ``(G, 3)``."""
    th, ph, la = np.asarray(params, dtype=float).T
    c, s = np.cos(th / 2), np.sin(th / 2)
    out = np.empty((len(th), 2, 2), dtype=complex)
    out[:, 0, 0] = c
    out[:, 0, 1] = -np.exp(1j * la) * s
    out[:, 1, 0] = np.exp(1j * ph) * s
    out[:, 1, 1] = np.exp(1j * (ph + la)) * c
    return out


def u3_derivative_stack(params: np.ndarray) -> np.ndarray:
    """``(G, 3, 2, 2)`` partial derivatives in theta, phi, lambda for each angle row."""
    th, ph, la = np.asarray(params, dtype=float).T
    c, s = np.cos(th / 2), np.sin(th / 2)
    el, ep, epl = np.exp(1j * la), np.exp(1j * ph), np.exp(1j * (ph + la))
    d = np.zeros((len(th), 3, 2, 2), dtype=complex)
    d[:, 0, 0, 0], d[:, 0, 0, 1], d[:, 0, 1, 0], d[:, 0, 1, 1] = -s / 2, -el * c / 2, ep * c / 2, -epl * s / 2
    d[:, 1, 1, 0], d[:, 1, 1, 1] = 1j * ep * s, 1j * epl * c
    d[:, 2, 0, 1], d[:, 2, 1, 1] = -1j * el * s, 1j * epl * c
    return d


def u3_derivatives(theta: float, phi: float, lam: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Partial derivatives of :func:`u3_matrix` in ``theta``, ``phi``, ``lam``."""
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    el, ep, epl = np.exp(1j * lam), np.exp(1j * phi), np.exp(1j * (phi + lam))
    d_theta = 0.5 * np.array([[-s, -el * c], [ep * c, -epl * s]])
    d_phi = np.array([[0, 0], [1j * ep * s, 1j * epl * c]])
    d_lam = np.array([[0, -1j * el * s], [0, 1j * epl * c]])
    return d_theta, d_phi, d_lam


@dataclass(frozen=True)
class Gate:
    kind: str
    target: int
    control: int = -1


def ring_gates(m: int, blocks: int) -> tuple[Gate, ...]:
    """``blocks`` repetitions of a U3 layer followed by a CU3 ring ``0→1, …, m-1→0``.

    A single qubit has no ring partner, so one-qubit circuits are U3 layers only.
    """
    layer = [Gate(U3, q) for q in range(m)]
    if m > 1:
        layer += [Gate(CU3, (q + 1) % m, q) for q in range(m)]
    return tuple(layer) * blocks


@dataclass(frozen=True)
class CircuitSpec:
    qubits: int
    gates: tuple[Gate, ...]
    params: np.ndarray  # (len(gates), 3) angles theta, phi, lambda

    def __post_init__(self):
        p = np.asarray(self.params, dtype=float)
        if p.shape != (len(self.gates), 3):
            raise DimensionMismatch(f"expected params of shape {(len(self.gates), 3)}, got {p.shape}")
        for g in self.gates:
            if not 0 <= g.target < self.qubits or g.control >= self.qubits or g.control == g.target:
                raise ValueError(f"gate {g} does not fit a {self.qubits}-qubit register")
        object.__setattr__(self, "params", p)

    @property
    def wiring(self) -> tuple[np.ndarray, np.ndarray]:
        """Target and control index arrays (control -1 when uncontrolled)."""
        return (np.array([g.target for g in self.gates], dtype=np.int64),
                np.array([g.control for g in self.gates], dtype=np.int64))

    @property
    def n_params(self) -> int:
        return self.params.size

    def with_params(self, params) -> "CircuitSpec":
        return CircuitSpec(self.qubits, self.gates, np.asarray(params, dtype=float).reshape(self.params.shape))


def ring_circuit(m: int, blocks: int = 4, params=None) -> CircuitSpec:
    gates = ring_gates(m, blocks)
    if params is None:
        params = np.zeros((len(gates), 3))
    return CircuitSpec(m, gates, np.asarray(params, dtype=float).reshape(len(gates), 3))


def _as_batch(spec: CircuitSpec, state) -> tuple[np.ndarray, bool]:
    state = np.asarray(state, dtype=complex)
    single = state.ndim == 1
    batch = np.array(state.reshape(1, -1) if single else state, dtype=complex, order="C")
    if batch.shape[1] != 1 << spec.qubits:
        raise DimensionMismatch(f"state of size {batch.shape[1]} for a {spec.qubits}-qubit circuit")
    return batch, single


def apply_circuit(spec: CircuitSpec, state) -> np.ndarray:
    """Output state(s) of the circuit; input is not modified."""
    batch, single = _as_batch(spec, state)
    targets, controls = spec.wiring
    run_gates(batch, u3_matrices(spec.params), spec.qubits, targets, controls)
    return batch[0] if single else batch


def z_expectations(state) -> np.ndarray:
    """Per-qubit ``<Z>`` from exact probabilities; shape ``(m,)`` or ``(B, m)``."""
    state = np.asarray(state)
    m = (state.shape[-1]).bit_length() - 1
    return (np.abs(state) ** 2) @ z_signs(m).T


def sampled_z_expectations(state, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Finite-shot estimate ``(n0 - n1) / shots`` of each qubit's ``<Z>``."""
    state = np.atleast_2d(np.asarray(state))
    m = state.shape[-1].bit_length() - 1
    probs = np.abs(state) ** 2
    probs /= probs.sum(axis=1, keepdims=True)
    counts = np.stack([rng.multinomial(shots, p) for p in probs])
    return counts @ z_signs(m).T / shots


def adjoint_gradient(spec: CircuitSpec, out_states: np.ndarray, dz: np.ndarray) -> np.ndarray:
    """Gradient of ``Σ_b Σ_q dz[b, q] <Z_q>_b`` w.r.t. all gate angles.

    ``out_states`` are the circuit outputs ``(B, 2**m)`` (not modified);
    returns an array shaped like ``spec.params``.
    """
    m = spec.qubits
    out_states = np.asarray(out_states, dtype=complex)
    bsz = len(out_states)
    work = np.empty((2, bsz, 1 << m), dtype=complex)
    work[0] = out_states
    work[1] = out_states * (np.asarray(dz, dtype=float) @ z_signs(m))
    us = u3_matrices(spec.params)
    udags = np.ascontiguousarray(us.conj().transpose(0, 2, 1))
    reds = np.zeros_like(us)
    targets, controls = spec.wiring
    # psi and lam both sit at the output of gate k: <lam|dU psi_in> = <lam|(dU U^†) psi>
    adjoint_sweep(work[0], work[1], udags, m, targets, controls, reds)
    du_udag = u3_derivative_stack(spec.params) @ udags[:, None]
    grad = 2.0 * np.real(np.einsum("kjab,kab->kj", du_udag, reds))
    return grad


def dense_unitary(spec: CircuitSpec) -> np.ndarray:
    """Full ``2**m`` unitary of the circuit, built column by column (tests and small m only)."""
    dim = 1 << spec.qubits
    return apply_circuit(spec, np.eye(dim, dtype=complex)).T
