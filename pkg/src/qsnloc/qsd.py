"""Pretty-good-measurement discrimination and the QSD localization schemes.

Every PGM element built from pure targets is rank one,
``E_i = v_i v_i^†`` with ``v_i = sqrt(q_i) ρ^{-1/2} |ψ_i>``, so outcome
probabilities reduce to ``|<v_i|ψ>|^2``.  ``Povm`` keeps that factored form
when available and only materializes dense matrices on request.  When the
targets do not span the full space an extra "reject" element ``I - Π`` (``Π``
the projector onto the support of ``ρ``) completes the measurement; a reject
draw resolves to the highest-prior target.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import geometry as geo
from .errors import DegenerateTargets, DimensionMismatch, NotNormalized, TooManyQubits
from .qmath import herm_eig, num_qubits
from .sensing import MIN_SEPARATION, SensingConfig, distances, draw_noise, evolved_uniform, phase_shift

MAX_QSD_QUBITS = 8
DEFAULT_SHOTS = 1000
PROB_SUM_ATOL = 1e-8

POVM_MAGIC = b"QSNPOVM\x00"
POVM_FORMAT_VERSION = 1
_POVM_HEADER = struct.Struct("<8sIIQQ")


@dataclass(frozen=True)
class TargetStateSet:
    states: np.ndarray  # (n, 2**m)
    priors: np.ndarray  # (n,)
    locations: np.ndarray  # (n, 2)

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def qubits(self) -> int:
        return num_qubits(self.states.shape[1])


def make_targets(states, priors=None, locations=None) -> TargetStateSet:
    states = np.atleast_2d(np.asarray(states, dtype=complex))
    n = len(states)
    if n == 0:
        raise DegenerateTargets("at least one target state is required")
    norms = np.linalg.norm(states, axis=1)
    if np.any(norms < 1e-12):
        raise DegenerateTargets(f"target {int(np.argmin(norms))} has zero norm")
    priors = np.full(n, 1.0 / n) if priors is None else np.asarray(priors, dtype=float)
    if priors.shape != (n,) or np.any(priors <= 0) or abs(priors.sum() - 1.0) > 1e-12:
        raise ValueError("priors must be positive and sum to one")
    locations = np.zeros((n, 2)) if locations is None else np.asarray(locations, dtype=float)
    return TargetStateSet(states / norms[:, None], priors, locations)


def targets_for_points(points, sensors, cfg: SensingConfig = SensingConfig()) -> TargetStateSet:
    """Noiseless evolved states for hypothesized TX points, uniform priors.

    Hypothesized points are representatives (cell or block centers) that may
    sit closer than 5 m to a sensor; such distances are clamped to 5 m, the
    largest phase the sensing model allows.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    d = np.maximum(distances(points, sensors), MIN_SEPARATION)
    return make_targets(evolved_uniform(phase_shift(d, 0.0, cfg)), locations=points)


class Povm:
    """A POVM held either as rank-one factors (+ optional reject element) or dense matrices."""

    def __init__(self, vectors=None, remainder=None, matrices=None, reject_last: bool = False):
        if (vectors is None) == (matrices is None):
            raise ValueError("give exactly one of vectors or matrices")
        self.vectors = None if vectors is None else np.asarray(vectors, dtype=complex)
        self.remainder = None if remainder is None else np.asarray(remainder, dtype=complex)
        self.matrices = None if matrices is None else np.asarray(matrices, dtype=complex)
        if self.vectors is not None:
            self.dim = self.vectors.shape[1]
            self.has_reject = self.remainder is not None
        else:
            if self.matrices.ndim != 3 or self.matrices.shape[1] != self.matrices.shape[2]:
                raise DimensionMismatch(f"POVM elements must be square, got {self.matrices.shape}")
            self.dim = self.matrices.shape[1]
            self.has_reject = reject_last

    @classmethod
    def from_elements(cls, elements, reject_last: bool = False) -> "Povm":
        return cls(matrices=np.stack([np.asarray(e, dtype=complex) for e in elements]), reject_last=reject_last)

    @property
    def n_outcomes(self) -> int:
        if self.vectors is not None:
            return len(self.vectors) + (1 if self.has_reject else 0)
        return len(self.matrices)

    @property
    def n_targets(self) -> int:
        """Outcomes that name a target (excludes the reject element)."""
        return self.n_outcomes - (1 if self.has_reject else 0)

    def elements(self) -> np.ndarray:
        """Dense ``(k, d, d)`` stack of all elements, reject element last."""
        if self.matrices is not None:
            return self.matrices
        mats = np.einsum("ia,ib->iab", self.vectors, self.vectors.conj())
        if self.remainder is not None:
            mats = np.concatenate([mats, self.remainder[None]], axis=0)
        return mats

    def probabilities(self, states) -> np.ndarray:
        """Outcome probabilities ``<ψ|E_i|ψ>`` for one state ``(d,)`` or a batch ``(K, d)``."""
        states = np.asarray(states, dtype=complex)
        if states.shape[-1] != self.dim:
            raise DimensionMismatch(f"state of size {states.shape[-1]} vs POVM dimension {self.dim}")
        if self.vectors is not None:
            p = np.abs(states @ self.vectors.conj().T) ** 2
            if self.remainder is not None:
                # Σ E_i = I, so the reject mass is what the rank-one elements leave over
                r = np.sum(np.abs(states) ** 2, axis=-1) - p.sum(axis=-1)
                p = np.concatenate([p, r[..., None]], axis=-1)
            return p
        return np.einsum("...a,kab,...b->...k", states.conj(), self.matrices, states).real

    def completeness_error(self) -> float:
        """Frobenius norm of ``Σ E_i - I``."""
        if self.vectors is not None:
            total = self.vectors.T @ self.vectors.conj()
            if self.remainder is not None:
                total = total + self.remainder
        else:
            total = self.matrices.sum(axis=0)
        return float(np.linalg.norm(total - np.eye(self.dim)))

    def min_eigenvalue(self) -> float:
        if self.vectors is not None:
            lo = 0.0
            if self.remainder is not None:
                lo = min(lo, float(herm_eig(self.remainder, atol=1e-8)[0][0]))
            return lo
        return min(float(herm_eig(e, atol=1e-8)[0][0]) for e in self.matrices)

    def check(self, atol: float = 1e-8) -> dict:
        """Invariant report: completeness, positivity, hermiticity."""
        els = self.elements() if self.matrices is not None or self.remainder is not None else None
        herm = 0.0
        if els is not None:
            herm = float(np.max(np.abs(els - els.conj().transpose(0, 2, 1))))
        comp = self.completeness_error()
        lo = self.min_eigenvalue()
        return {
            "dim": self.dim,
            "outcomes": self.n_outcomes,
            "completeness_error": comp,
            "min_eigenvalue": lo,
            "hermiticity_error": herm,
            "ok": comp <= atol and lo >= -atol and herm <= atol,
        }


def build_pgm(targets: TargetStateSet, tol: float | None = None) -> Povm:
    """Pretty good measurement ``E_i = q_i ρ^{-1/2} ρ_i ρ^{-1/2}`` for pure targets."""
    states = np.asarray(targets.states, dtype=complex)
    if states.shape[0] == 0:
        raise DegenerateTargets("at least one target state is required")
    if num_qubits(states.shape[1]) > MAX_QSD_QUBITS:
        raise TooManyQubits(f"PGM limited to {MAX_QSD_QUBITS} qubits, got {num_qubits(states.shape[1])}")
    if np.any(np.linalg.norm(states, axis=1) < 1e-12):
        raise DegenerateTargets("a target state has zero norm")
    q = np.asarray(targets.priors, dtype=float)
    rho = (states.T * q) @ states.conj()
    w, v = herm_eig(rho)
    if tol is None:
        tol = 1e-10 * float(np.max(np.abs(w)))
    keep = w > tol
    vs = v[:, keep]
    inv_sqrt = (vs / np.sqrt(w[keep])) @ vs.conj().T
    vectors = (states @ inv_sqrt.T) * np.sqrt(q)[:, None]
    remainder = None
    if keep.sum() < len(w):
        remainder = np.eye(len(w), dtype=complex) - vs @ vs.conj().T
    return Povm(vectors=vectors, remainder=remainder)


def probability_of_error(povm: Povm, targets: TargetStateSet) -> float:
    """``Σ_i q_i Σ_{j≠i} <ψ_i|E_j|ψ_i>``; reject outcomes count as errors."""
    p = povm.probabilities(targets.states)
    correct = p[np.arange(targets.n), np.arange(targets.n)]
    return float(np.sum(targets.priors * (1.0 - correct)))


def _validated(p: np.ndarray) -> np.ndarray:
    total = p.sum(axis=-1, keepdims=True)
    if np.any(np.abs(total - 1.0) > PROB_SUM_ATOL):
        bad = float(np.max(np.abs(total - 1.0)))
        raise NotNormalized(f"outcome probabilities miss unit sum by {bad:.3e}")
    p = np.clip(p, 0.0, None)
    return p / p.sum(axis=-1, keepdims=True)


def _sample(p: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(p, axis=-1)
    idx = (cdf < u[..., None]).sum(axis=-1)
    return np.minimum(idx, p.shape[-1] - 1)


def measure(state, povm: Povm, rng: np.random.Generator) -> int:
    """Draw one outcome index with probability ``<ψ|E_i|ψ>``."""
    p = _validated(povm.probabilities(state))
    return int(_sample(p, np.asarray(rng.random())))


def measure_many(states, povm: Povm, rng: np.random.Generator) -> np.ndarray:
    """One independent outcome per row of ``states``."""
    p = _validated(povm.probabilities(np.atleast_2d(states)))
    return _sample(p, rng.random(len(p)))


def _resolve_reject(outcomes: np.ndarray, povm: Povm, priors: np.ndarray) -> np.ndarray:
    if povm.has_reject:
        outcomes = np.where(outcomes == povm.n_targets, int(np.argmax(priors)), outcomes)
    return outcomes


def discriminate_multishot(tx, sensors, povm: Povm, targets: TargetStateSet, shots: int,
                           cfg: SensingConfig, rng: np.random.Generator) -> int:
    """Modal outcome over ``shots`` fresh sense-and-measure rounds (ties to the lowest index).

    Remainder ("reject") draws do not vote; if every round rejects, the
    answer is the prior-argmax target, as for a single rejected measurement.

    The transmitter stays at ``tx`` while each round draws new field noise
    for every sensor.
    """
    if shots < 1:
        raise ValueError("shots must be at least 1")
    tx = tx.point if isinstance(tx, geo.TxLocation) else np.asarray(tx, dtype=float)
    sensors = np.asarray(sensors, dtype=float).reshape(-1, 2)
    noise = draw_noise(rng, (shots, len(sensors)), cfg)
    states = evolved_uniform(phase_shift(distances(tx, sensors)[None, :], noise, cfg))
    outcomes = measure_many(states, povm, rng)
    counts = np.bincount(outcomes, minlength=povm.n_outcomes)[:targets.n]
    if counts.sum() == 0:
        # every shot landed on the remainder element
        return int(_resolve_reject(outcomes[:1], povm, targets.priors)[0])
    # remainder draws abstain; the vote is over identifying outcomes only
    return int(np.argmax(counts))


@dataclass(frozen=True)
class Prediction:
    point: np.ndarray
    cell: int
    coarse_block: int = -1


def _layout_key(grid: geo.GridGeometry, layout: geo.SensorLayout, cfg: SensingConfig) -> str:
    blob = json.dumps({"grid": grid.to_dict(), "layout": layout.to_dict(), "cfg": cfg.to_dict()}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


class QsdLocalizer:
    """QSD-One / QSD-Two over a fixed grid and sensor layout.

    Target sets and PGMs are built on first use and cached per
    ``(level, block)``.  Call :meth:`prepare` before sharing across threads.
    """

    def __init__(self, grid: geo.GridGeometry, layout: geo.SensorLayout, cfg: SensingConfig = SensingConfig()):
        self.grid = grid
        self.layout = layout
        self.cfg = cfg
        self._cache: dict[tuple[str, int], tuple[TargetStateSet, Povm]] = {}

    def stage(self, level: str, block: int = -1) -> tuple[TargetStateSet, Povm]:
        key = (level, block)
        if key not in self._cache:
            if level == "cell":
                pts, sensors = geo.centers(self.grid, "cell"), self.layout.coarse
            elif level == "block":
                pts, sensors = geo.centers(self.grid, "block"), self.layout.coarse
            elif level == "fine":
                pts = geo.centers(self.grid, "cell")[self.grid.cells_in_block(block)]
                sensors = self.layout.fine[block]
            else:
                raise ValueError(f"unknown level {level!r}")
            targets = targets_for_points(pts, sensors, self.cfg)
            self._cache[key] = (targets, build_pgm(targets))
        return self._cache[key]

    def prepare(self, two_level: bool = True) -> None:
        if two_level:
            self.stage("block")
            for b in range(self.grid.n_blocks):
                self.stage("fine", b)
        else:
            self.stage("cell")

    def one(self, tx, shots: int, rng: np.random.Generator) -> Prediction:
        targets, povm = self.stage("cell")
        i = discriminate_multishot(tx, self.layout.coarse, povm, targets, shots, self.cfg, rng)
        return Prediction(targets.locations[i].copy(), i)

    def two(self, tx, shots: int, rng: np.random.Generator) -> Prediction:
        targets, povm = self.stage("block")
        b = discriminate_multishot(tx, self.layout.coarse, povm, targets, shots, self.cfg, rng)
        if self.grid.cells_per_block == 1:
            # a one-cell block leaves nothing to discriminate
            return Prediction(targets.locations[b].copy(), b, b)
        ftargets, fpovm = self.stage("fine", b)
        j = discriminate_multishot(tx, self.layout.fine[b], fpovm, ftargets, shots, self.cfg, rng)
        return Prediction(ftargets.locations[j].copy(), self.grid.cells_in_block(b)[j], b)


_LOCALIZERS: dict[str, QsdLocalizer] = {}


def localizer_for(grid: geo.GridGeometry, layout: geo.SensorLayout, cfg: SensingConfig = SensingConfig()) -> QsdLocalizer:
    key = _layout_key(grid, layout, cfg)
    if key not in _LOCALIZERS:
        _LOCALIZERS[key] = QsdLocalizer(grid, layout, cfg)
    return _LOCALIZERS[key]


def qsd_one(grid, layout, tx, shots: int = DEFAULT_SHOTS, cfg: SensingConfig = SensingConfig(),
            rng: np.random.Generator | None = None) -> Prediction:
    """One-level PGM localization; the prediction is always a cell center."""
    if len(layout.coarse) > MAX_QSD_QUBITS:
        raise TooManyQubits(f"QSD schemes support at most {MAX_QSD_QUBITS} sensors")
    return localizer_for(grid, layout, cfg).one(tx, shots, rng)


def qsd_two(grid, layout, tx, shots: int = DEFAULT_SHOTS, cfg: SensingConfig = SensingConfig(),
            rng: np.random.Generator | None = None) -> Prediction:
    """Block-level PGM over coarse sensors, then cell-level PGM over the chosen block's sensors."""
    if len(layout.coarse) > MAX_QSD_QUBITS:
        raise TooManyQubits(f"QSD schemes support at most {MAX_QSD_QUBITS} sensors")
    return localizer_for(grid, layout, cfg).two(tx, shots, rng)


def save_povm(path, povm: Povm) -> None:
    """Binary dump: header ``<8s magic, u32 version, u32 flags, u64 dim, u64 count>`` then
    ``count`` row-major ``dim x dim`` matrices of little-endian (re, im) float64 pairs.
    Flag bit 0 marks the last element as the reject element."""
    els = np.ascontiguousarray(povm.elements(), dtype="<c16")
    flags = 1 if povm.has_reject else 0
    with open(path, "wb") as fh:
        fh.write(_POVM_HEADER.pack(POVM_MAGIC, POVM_FORMAT_VERSION, flags, povm.dim, len(els)))
        fh.write(els.tobytes())


def load_povm(path) -> Povm:
    data = Path(path).read_bytes()
    if len(data) < _POVM_HEADER.size:
        raise ValueError(f"{path}: truncated POVM file")
    magic, version, flags, dim, count = _POVM_HEADER.unpack_from(data)
    if magic != POVM_MAGIC or version != POVM_FORMAT_VERSION:
        raise ValueError(f"{path}: not a version-{POVM_FORMAT_VERSION} POVM file")
    body = np.frombuffer(data, dtype="<c16", offset=_POVM_HEADER.size)
    if body.size != count * dim * dim:
        raise ValueError(f"{path}: expected {count} elements of {dim}x{dim}, found {body.size} values")
    return Povm(matrices=body.reshape(count, dim, dim).astype(complex), reject_last=bool(flags & 1))
