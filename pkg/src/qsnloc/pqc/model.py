"""Hybrid model: ring PQC -> per-qubit <Z> -> single linear layer."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..data import Dataset
from ..errors import DimensionMismatch, EmptyBatch
from .circuit import CU3, CircuitSpec, Gate, adjoint_gradient, apply_circuit, ring_circuit, sampled_z_expectations, z_expectations

CLASSIFIER = "classifier"
REGRESSION = "regression"
MODEL_FORMAT = "qsnloc.pqc-model/1"


@dataclass(frozen=True)
class LinearHead:
    kind: str
    weights: np.ndarray  # (out, m)
    bias: np.ndarray  # (out,)

    def __post_init__(self):
        if self.kind not in (CLASSIFIER, REGRESSION):
            raise ValueError(f"unknown head kind {self.kind!r}")
        if self.kind == REGRESSION and len(self.bias) != 2:
            raise ValueError("a regression head has exactly two outputs")
        if self.weights.shape[0] != len(self.bias):
            raise DimensionMismatch("weights and bias disagree on the output count")

    @property
    def n_out(self) -> int:
        return len(self.bias)


@dataclass(frozen=True)
class CoordScale:
    """Affine map between meters and the unit square over ``domain``."""

    origin: np.ndarray
    size: np.ndarray

    @classmethod
    def for_domain(cls, domain) -> "CoordScale":
        x0, y0, x1, y1 = domain
        return cls(np.array([x0, y0], dtype=float), np.array([x1 - x0, y1 - y0], dtype=float))

    def normalize(self, xy):
        return (np.asarray(xy, dtype=float) - self.origin) / self.size

    def to_meters(self, u):
        return self.origin + np.asarray(u, dtype=float) * self.size

    def clamp(self, xy):
        return np.clip(xy, self.origin, self.origin + self.size)


@dataclass(frozen=True)
class PqcModel:
    circuit: CircuitSpec
    head: LinearHead
    coord_scale: CoordScale
    # classifier only: location and global cell id represented by each output
    label_points: np.ndarray | None = None
    label_cells: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def qubits(self) -> int:
        return self.circuit.qubits

    @property
    def kind(self) -> str:
        return self.head.kind

    def parameters(self) -> np.ndarray:
        return np.concatenate([self.circuit.params.ravel(), self.head.weights.ravel(), self.head.bias])

    def with_parameters(self, vec) -> "PqcModel":
        vec = np.asarray(vec, dtype=float)
        nc, nw = self.circuit.n_params, self.head.weights.size
        if vec.shape != (nc + nw + self.head.n_out,):
            raise DimensionMismatch(f"parameter vector of length {vec.size}, model has {nc + nw + self.head.n_out}")
        head = replace(self.head, weights=vec[nc:nc + nw].reshape(self.head.weights.shape), bias=vec[nc + nw:].copy())
        return replace(self, circuit=self.circuit.with_params(vec[:nc]), head=head)


def init_model(m: int, kind: str, n_out: int, domain, rng: np.random.Generator, blocks: int = 4,
               label_points=None, label_cells=None) -> PqcModel:
    """Angles uniform on [-π, π], weights uniform on ±1/sqrt(m), zero bias."""
    circuit = ring_circuit(m, blocks)
    circuit = circuit.with_params(rng.uniform(-np.pi, np.pi, size=circuit.params.shape))
    if kind == REGRESSION:
        n_out = 2
    bound = 1.0 / np.sqrt(m)
    head = LinearHead(kind, rng.uniform(-bound, bound, size=(n_out, m)), np.zeros(n_out))
    return PqcModel(
        circuit, head, CoordScale.for_domain(domain),
        None if label_points is None else np.asarray(label_points, dtype=float),
        None if label_cells is None else np.asarray(label_cells, dtype=int),
    )


def _states_of(batch) -> np.ndarray:
    if isinstance(batch, Dataset):
        return batch.states()
    return np.atleast_2d(np.asarray(batch, dtype=complex))


def features(model: PqcModel, states, expectation_shots: int | None = None, rng=None) -> np.ndarray:
    states = _states_of(states)
    if states.shape[1] != 1 << model.qubits:
        raise DimensionMismatch(f"states of size {states.shape[1]} for a {model.qubits}-qubit model")
    out = apply_circuit(model.circuit, states)
    if expectation_shots:
        return sampled_z_expectations(out, expectation_shots, rng)
    return z_expectations(out)


def head_output(model: PqcModel, z: np.ndarray) -> np.ndarray:
    return z @ model.head.weights.T + model.head.bias


def forward(model: PqcModel, states, expectation_shots: int | None = None, rng=None) -> np.ndarray:
    """Class scores ``(B, n_out)`` or predicted coordinates in meters ``(B, 2)``."""
    raw = head_output(model, features(model, states, expectation_shots, rng))
    if model.kind == REGRESSION:
        return model.coord_scale.to_meters(raw)
    return raw


def _log_softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _loss_terms(model: PqcModel, raw: np.ndarray, batch: Dataset) -> tuple[float, np.ndarray]:
    """Loss and its gradient w.r.t. the raw head output."""
    b = len(raw)
    if model.kind == CLASSIFIER:
        logp = _log_softmax(raw)
        labels = np.asarray(batch.labels, dtype=int)
        loss = -float(np.mean(logp[np.arange(b), labels]))
        d_raw = np.exp(logp)
        d_raw[np.arange(b), labels] -= 1.0
        return loss, d_raw / b
    diff = raw - model.coord_scale.normalize(batch.coords)
    return float(np.mean(diff ** 2)), 2.0 * diff / diff.size


def loss(model: PqcModel, batch: Dataset) -> float:
    """Mean cross-entropy (classifier) or mean squared error in normalized coordinates (regression)."""
    if len(batch) == 0:
        raise EmptyBatch("loss of an empty batch")
    raw = head_output(model, features(model, batch))
    return _loss_terms(model, raw, batch)[0]


def loss_and_gradients(model: PqcModel, batch: Dataset) -> tuple[float, np.ndarray]:
    """Loss and its exact gradient over ``model.parameters()`` (adjoint through the circuit)."""
    if len(batch) == 0:
        raise EmptyBatch("gradient of an empty batch")
    out = apply_circuit(model.circuit, batch.states())
    z = z_expectations(out)
    raw = head_output(model, z)
    value, d_raw = _loss_terms(model, raw, batch)
    d_w = d_raw.T @ z
    d_b = d_raw.sum(axis=0)
    d_z = d_raw @ model.head.weights
    d_circ = adjoint_gradient(model.circuit, out, d_z)
    return value, np.concatenate([d_circ.ravel(), d_w.ravel(), d_b])


def gradients(model: PqcModel, batch: Dataset) -> np.ndarray:
    return loss_and_gradients(model, batch)[1]


def predict_labels(model: PqcModel, states, **kw) -> np.ndarray:
    """Argmax class (lowest index on ties)."""
    return np.argmax(forward(model, states, **kw), axis=1)


def to_dict(model: PqcModel) -> dict:
    c = model.circuit
    return {
        "format": MODEL_FORMAT,
        "circuit": {
            "qubits": c.qubits,
            "gates": [[g.kind, g.control, g.target] for g in c.gates],
            "params": c.params.tolist(),
        },
        "head": {"kind": model.head.kind, "weights": model.head.weights.tolist(), "bias": model.head.bias.tolist()},
        "coord_scale": {"origin": model.coord_scale.origin.tolist(), "size": model.coord_scale.size.tolist()},
        "label_points": None if model.label_points is None else model.label_points.tolist(),
        "label_cells": None if model.label_cells is None else model.label_cells.tolist(),
        "meta": model.meta,
    }


def from_dict(d: dict) -> PqcModel:
    if d.get("format") != MODEL_FORMAT:
        raise ValueError(f"unsupported model format {d.get('format')!r}")
    c = d["circuit"]
    gates = tuple(Gate(kind, int(target), int(control)) for kind, control, target in c["gates"])
    circuit = CircuitSpec(int(c["qubits"]), gates, np.array(c["params"], dtype=float).reshape(len(gates), 3))
    h = d["head"]
    head = LinearHead(h["kind"], np.array(h["weights"], dtype=float).reshape(len(h["bias"]), -1), np.array(h["bias"], dtype=float))
    cs = CoordScale(np.array(d["coord_scale"]["origin"], dtype=float), np.array(d["coord_scale"]["size"], dtype=float))
    lp = d.get("label_points")
    lc = d.get("label_cells")
    return PqcModel(circuit, head, cs, None if lp is None else np.array(lp, dtype=float),
                    None if lc is None else np.array(lc, dtype=int), d.get("meta", {}))


def save_model(path, model: PqcModel) -> None:
    Path(path).write_text(json.dumps(to_dict(model), sort_keys=True))


def load_model(path) -> PqcModel:
    return from_dict(json.loads(Path(path).read_text()))


def check_model(model: PqcModel) -> dict:
    """Structural invariants: ring layout, parameter count, head shape, unit-norm outputs."""
    m = model.qubits
    ring = ring_circuit(m, 1).gates
    n_blocks = len(model.circuit.gates) // max(len(ring), 1)
    ring_ok = n_blocks * len(ring) == len(model.circuit.gates) and model.circuit.gates == ring * n_blocks
    count_ok = model.circuit.n_params == n_blocks * len(ring) * 3
    head_ok = model.head.weights.shape[1] == m
    probe = np.full(1 << m, 2.0 ** (-m / 2), dtype=complex)
    norm_err = abs(np.linalg.norm(apply_circuit(model.circuit, probe)) - 1.0)
    has_cu3 = any(g.kind == CU3 for g in model.circuit.gates)
    return {
        "qubits": m,
        "blocks": n_blocks,
        "circuit_params": model.circuit.n_params,
        "ring_layout": bool(ring_ok),
        "param_count": bool(count_ok),
        "head_shape": bool(head_ok),
        "norm_error": float(norm_err),
        "entangling": has_cu3,
        "ok": bool(ring_ok and count_ok and head_ok and norm_err < 1e-10),
    }
