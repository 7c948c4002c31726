"""Dense complex linear algebra used by the PGM builder and the circuit simulator.

Matrices and state vectors are plain ``numpy`` arrays of dtype ``complex128``.
Multi-qubit registers follow the Kronecker convention: qubit 0 is the most
significant bit of the basis index, so ``kron(U0, U1, ..., U_{m-1})`` acts
with ``U0`` on qubit 0.

Random numbers come from numpy's PCG64 generator seeded through a
``SeedSequence``.  Independent streams are derived by seed splitting: the
tuple ``(seed, stream...)`` fully determines a stream, so parallel workers
never share state and results do not depend on scheduling.
"""
from __future__ import annotations

from functools import reduce

import numpy as np

from .errors import DimensionMismatch, NegativeEigenvalue, NotHermitian

HERMITIAN_ATOL = 1e-12
NORM_ATOL = 1e-10

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)

RNG_ALGORITHM = "PCG64 (numpy), SeedSequence(seed, spawn_key=stream)"


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Deterministic generator for ``(seed, *stream)``.

    Distinct stream tuples give statistically independent sequences; equal
    tuples reproduce the same draws on every platform numpy supports.
    """
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.PCG64(ss))


def kron(a: np.ndarray, b: np.ndarray, *more: np.ndarray) -> np.ndarray:
    """Kronecker product of two or more matrices (or vectors)."""
    return reduce(np.kron, (b, *more), np.asarray(a))


def is_hermitian(h: np.ndarray, atol: float = HERMITIAN_ATOL) -> bool:
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        return False
    return bool(np.allclose(h, h.conj().T, rtol=0.0, atol=atol))


def _check_hermitian(h: np.ndarray, atol: float) -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {h.shape}")
    if not is_hermitian(h, atol):
        dev = np.max(np.abs(h - h.conj().T))
        raise NotHermitian(f"matrix deviates from its adjoint by {dev:.3e}")
    return h


def herm_eig(h: np.ndarray, atol: float = HERMITIAN_ATOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition ``h = V diag(w) V^†`` of a Hermitian matrix.

    Eigenvalues are returned in ascending order.  The symmetry check uses an
    absolute tolerance scaled by the largest entry so that it is scale-free.
    """
    h = np.asarray(h, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(h)))) if h.size else 1.0
    h = _check_hermitian(h, atol * scale)
    # symmetrize away the sub-tolerance asymmetry before handing to LAPACK
    w, v = np.linalg.eigh(0.5 * (h + h.conj().T))
    return w, v


def pinv_sqrt(h: np.ndarray, tol: float | None = None) -> np.ndarray:
    """Inverse square root of a PSD matrix restricted to its support.

    Eigenvalues above ``tol`` map to ``λ^{-1/2}``; the rest map to zero.
    The default ``tol`` is ``1e-10 * max|λ|``.
    """
    w, v = herm_eig(h)
    if tol is None:
        tol = 1e-10 * (float(np.max(np.abs(w))) if w.size else 0.0)
    if w.size and w.min() < -tol:
        raise NegativeEigenvalue(f"eigenvalue {w.min():.3e} below -{tol:.3e}")
    f = np.zeros_like(w)
    keep = w > tol
    f[keep] = 1.0 / np.sqrt(w[keep])
    return (v * f) @ v.conj().T


def support_projector(h: np.ndarray, tol: float | None = None) -> np.ndarray:
    """Orthogonal projector onto the eigenspace of ``h`` with eigenvalues above ``tol``."""
    w, v = herm_eig(h)
    if tol is None:
        tol = 1e-10 * (float(np.max(np.abs(w))) if w.size else 0.0)
    vs = v[:, w > tol]
    return vs @ vs.conj().T


def expectation(state: np.ndarray, obs: np.ndarray, imag_atol: float = 1e-10) -> float:
    """Real expectation value ``<ψ|obs|ψ>``."""
    state = np.asarray(state, dtype=complex)
    obs = np.asarray(obs, dtype=complex)
    if obs.ndim != 2 or obs.shape != (state.size, state.size):
        raise DimensionMismatch(f"observable {obs.shape} does not act on a state of size {state.size}")
    val = np.vdot(state, obs @ state)
    if abs(val.imag) > imag_atol:
        raise NotHermitian(f"expectation has imaginary part {val.imag:.3e}")
    return float(val.real)


def normalize(state: np.ndarray) -> np.ndarray:
    state = np.asarray(state, dtype=complex)
    nrm = np.linalg.norm(state)
    if nrm == 0:
        raise ValueError("cannot normalize the zero vector")
    return state / nrm


def is_normalized(state: np.ndarray, atol: float = NORM_ATOL) -> bool:
    return abs(np.vdot(state, state).real - 1.0) <= atol


def num_qubits(dim: int) -> int:
    m = int(dim).bit_length() - 1
    if dim <= 0 or 1 << m != dim:
        raise DimensionMismatch(f"dimension {dim} is not a power of two")
    return m


def random_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random pure state of the given dimension."""
    z = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return z / np.linalg.norm(z)


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (a + a.conj().T) / 2


def z_signs(m: int) -> np.ndarray:
    """``(m, 2**m)`` table of Pauli-Z eigenvalues: +1 where bit ``q`` of the index is 0."""
    idx = np.arange(1 << m)
    shifts = np.arange(m - 1, -1, -1)[:, None]
    return 1.0 - 2.0 * ((idx[None, :] >> shifts) & 1)


def single_qubit_operator(op: np.ndarray, qubit: int, m: int) -> np.ndarray:
    """Dense ``2**m`` operator acting as ``op`` on ``qubit`` and identity elsewhere."""
    mats = [IDENTITY_2] * m
    mats[qubit] = np.asarray(op, dtype=complex)
    return kron(*mats) if m > 1 else mats[0]
