"""RF propagation and qubit phase accumulation for a network of quantum sensors.

A transmitter at distance ``d`` produces a free-space field ``sqrt(30 P)/d``
scaled by ``(1 + noise)``.  The accumulated phase is proportional to that
field over the sensing window, with the coupling fixed by calibration: a
noiseless sensor at ``calibration_distance`` accrues ``calibration_phase``.
The coupling constant therefore never appears numerically and

    phi(d) = calibration_phase * (calibration_distance / d) * (1 + noise).

Note that a sensor at exactly 5 m accrues ``2π``, i.e. ``U = -I``, which is a
global phase indistinguishable from a distant transmitter when only that
sensor is considered.  The model is kept as is; phases are never wrapped.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DimensionMismatch, OutOfRange, TooClose

MIN_SEPARATION = 5.0
# slack for distances computed from coordinates that sit exactly 5 m apart
_SEPARATION_SLACK = 1e-9


@dataclass(frozen=True)
class SensingConfig:
    tx_power: float = 1e-7
    sensing_time: float = 1e-3
    calibration_distance: float = 5.0
    calibration_phase: float = 2 * math.pi
    noise_halfwidth: float = 0.05

    def __post_init__(self):
        for name in ("tx_power", "sensing_time", "calibration_distance", "calibration_phase"):
            if not getattr(self, name) > 0:
                raise OutOfRange(f"{name} must be strictly positive")
        if self.noise_halfwidth < 0:
            raise OutOfRange("noise_halfwidth must be non-negative")
        if self.calibration_distance < MIN_SEPARATION:
            raise OutOfRange(f"calibration_distance must be at least {MIN_SEPARATION} m")

    def to_dict(self) -> dict:
        return asdict(self)


def _check_distance(distance):
    d = np.asarray(distance, dtype=float)
    if np.any(d < MIN_SEPARATION - _SEPARATION_SLACK):
        raise TooClose(f"transmitter-sensor distance {float(np.min(d)):.4f} m is below {MIN_SEPARATION} m")
    return d


def field_strength(distance, noise=0.0, cfg: SensingConfig = SensingConfig()):
    """Electric field amplitude in V/m at ``distance`` meters from an isotropic radiator."""
    d = _check_distance(distance)
    out = math.sqrt(30.0 * cfg.tx_power) / d * (1.0 + np.asarray(noise, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def phase_shift(distance, noise=0.0, cfg: SensingConfig = SensingConfig()):
    """Phase (radians) accrued over the sensing window; vectorizes over arrays."""
    d = _check_distance(distance)
    out = cfg.calibration_phase * (cfg.calibration_distance / d) * (1.0 + np.asarray(noise, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def sensor_unitary(phi: float) -> np.ndarray:
    """``exp(-i phi Z / 2)`` for a single sensor qubit."""
    return np.diag([np.exp(-0.5j * phi), np.exp(0.5j * phi)])


def uniform_initial(m: int) -> np.ndarray:
    if not 1 <= m <= 16:
        raise OutOfRange(f"qubit count must be in [1, 16], got {m}")
    return np.full(1 << m, 2.0 ** (-m / 2), dtype=complex)


def distances(tx, sensors) -> np.ndarray:
    """Euclidean distances from one or many TX points to each sensor.

    ``tx`` of shape ``(2,)`` gives ``(m,)``; shape ``(k, 2)`` gives ``(k, m)``.
    """
    tx = np.asarray(tx, dtype=float)
    s = np.asarray(sensors, dtype=float).reshape(-1, 2)
    diff = tx[..., None, :] - s
    return np.hypot(diff[..., 0], diff[..., 1])


def draw_noise(rng: np.random.Generator, shape, cfg: SensingConfig = SensingConfig()) -> np.ndarray:
    """Independent multiplicative field noise, uniform on ``[-h, h]``."""
    h = cfg.noise_halfwidth
    return rng.uniform(-h, h, size=shape) if h > 0 else np.zeros(shape)


def sensor_phases(tx, sensors, noises=0.0, cfg: SensingConfig = SensingConfig()) -> np.ndarray:
    """Per-sensor phases for one TX ``(m,)`` or a batch of TX points ``(k, m)``."""
    return np.asarray(phase_shift(distances(tx, sensors), noises, cfg), dtype=float)


def _diagonal_factors(phases: np.ndarray) -> np.ndarray:
    """Diagonal of ``⊗_j exp(-i φ_j Z / 2)`` for each row of ``phases``, built by outer products."""
    half = 0.5 * phases
    out = np.ones(phases.shape[:-1] + (1,), dtype=complex)
    for j in range(phases.shape[-1]):
        f = np.stack([np.exp(-1j * half[..., j]), np.exp(1j * half[..., j])], axis=-1)
        out = (out[..., :, None] * f[..., None, :]).reshape(phases.shape[:-1] + (-1,))
    return out


def apply_phases(initial: np.ndarray, phases: np.ndarray) -> np.ndarray:
    """Apply ``⊗_j exp(-i φ_j Z / 2)`` to ``initial`` for each row of ``phases``.

    The product of diagonal single-qubit unitaries is itself diagonal, so the
    update is one elementwise multiply; the ``2**m`` square matrix is never formed.
    """
    phases = np.asarray(phases, dtype=float)
    m = phases.shape[-1]
    if m == 0:
        raise DimensionMismatch("at least one sensor is required")
    initial = np.asarray(initial, dtype=complex)
    if initial.shape[-1] != 1 << m:
        raise DimensionMismatch(f"state of size {initial.shape[-1]} does not match {m} sensors")
    return initial * _diagonal_factors(phases)


def evolve(initial, tx, sensors, noises=None, cfg: SensingConfig = SensingConfig()) -> np.ndarray:
    """Evolved network state ``(⊗_i U_i)|initial>`` for a transmitter at ``tx``."""
    sensors = np.asarray(sensors, dtype=float).reshape(-1, 2)
    m = len(sensors)
    if m == 0:
        raise DimensionMismatch("at least one sensor is required")
    if noises is None:
        noises = np.zeros(m)
    noises = np.asarray(noises, dtype=float)
    if noises.shape != (m,):
        raise DimensionMismatch(f"expected {m} noise values, got shape {noises.shape}")
    initial = np.asarray(initial, dtype=complex)
    if initial.shape != (1 << m,):
        raise DimensionMismatch(f"initial state of size {initial.size} does not match {m} sensors")
    return apply_phases(initial, sensor_phases(tx, sensors, noises, cfg))


def evolved_uniform(phases: np.ndarray) -> np.ndarray:
    """Evolved states from the uniform superposition, one per row of ``phases``."""
    phases = np.asarray(phases, dtype=float)
    return _diagonal_factors(phases) * 2.0 ** (-phases.shape[-1] / 2)
