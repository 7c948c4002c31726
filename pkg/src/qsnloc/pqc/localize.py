"""PQC-One and PQC-Two transmitter localization with trained models."""
from __future__ import annotations

import numpy as np

from .. import geometry as geo
from ..errors import TooManyQubits
from ..qsd import Prediction
from ..sensing import SensingConfig, distances, draw_noise, evolved_uniform, phase_shift
from .model import REGRESSION, PqcModel, forward

MAX_PQC_QUBITS = 16


def sense(tx_points, sensors, cfg: SensingConfig, rngs) -> np.ndarray:
    """Noisy evolved states for a batch of TX points, one generator per TX.

    Each generator supplies that TX's per-sensor noise, so batching never
    changes the draws a single-TX call would make.
    """
    tx_points = np.atleast_2d(np.asarray(tx_points, dtype=float))
    sensors = np.asarray(sensors, dtype=float).reshape(-1, 2)
    noise = np.stack([draw_noise(r, len(sensors), cfg) for r in rngs])
    return evolved_uniform(phase_shift(distances(tx_points, sensors), noise, cfg))


def decode(model: PqcModel, grid: geo.GridGeometry, outputs: np.ndarray) -> list[tuple[np.ndarray, int]]:
    """Turn head outputs into ``(point, cell)`` pairs."""
    out = []
    for row in np.atleast_2d(outputs):
        if model.kind == REGRESSION:
            pt = model.coord_scale.clamp(row)
            out.append((pt, grid.cell_of(pt)))
        else:
            k = int(np.argmax(row))
            out.append((model.label_points[k].copy(), int(model.label_cells[k])))
    return out


def pqc_one_batch(model: PqcModel, grid, tx_points, sensors, cfg: SensingConfig, rngs,
                  expectation_shots: int | None = None) -> list[Prediction]:
    if len(np.asarray(sensors).reshape(-1, 2)) > MAX_PQC_QUBITS:
        raise TooManyQubits(f"PQC schemes support at most {MAX_PQC_QUBITS} sensors")
    states = sense(tx_points, sensors, cfg, rngs)
    shot_rng = rngs[0] if expectation_shots else None
    outputs = forward(model, states, expectation_shots, shot_rng)
    return [Prediction(p, c) for p, c in decode(model, grid, outputs)]


def pqc_one(model: PqcModel, grid, tx, sensors, cfg: SensingConfig = SensingConfig(),
            rng: np.random.Generator | None = None, expectation_shots: int | None = None) -> Prediction:
    """Sense once with fresh noise, run the hybrid model, return a cell center or a clamped point."""
    pt = tx.point if isinstance(tx, geo.TxLocation) else np.asarray(tx, dtype=float)
    return pqc_one_batch(model, grid, pt[None], sensors, cfg, [rng], expectation_shots)[0]


def pqc_two_batch(coarse: PqcModel, fine: dict[int, PqcModel], grid, tx_points, layout: geo.SensorLayout,
                  cfg: SensingConfig, rngs, expectation_shots: int | None = None) -> list[Prediction]:
    tx_points = np.atleast_2d(np.asarray(tx_points, dtype=float))
    states = sense(tx_points, layout.coarse, cfg, rngs)
    shot_rng = rngs[0] if expectation_shots else None
    blocks = np.argmax(forward(coarse, states, expectation_shots, shot_rng), axis=1)
    if grid.cells_per_block == 1:
        # a one-cell block leaves nothing for a fine stage to decide
        pts = geo.centers(grid, "cell")
        return [Prediction(pts[int(b)].copy(), int(b), int(b)) for b in blocks]
    # fine-stage noise is drawn per TX after its coarse noise, in TX order
    fine_states = [sense(tx_points[i:i + 1], layout.fine[int(b)], cfg, [rngs[i]])[0] for i, b in enumerate(blocks)]
    preds: list[Prediction | None] = [None] * len(tx_points)
    for b in np.unique(blocks):
        idx = np.flatnonzero(blocks == b)
        model = fine[int(b)]
        outputs = forward(model, np.stack([fine_states[i] for i in idx]), expectation_shots, shot_rng)
        for i, (p, c) in zip(idx, decode(model, grid, outputs)):
            preds[i] = Prediction(p, c, int(b))
    return preds


def pqc_two(coarse: PqcModel, fine: dict[int, PqcModel], grid, tx, layout: geo.SensorLayout,
            cfg: SensingConfig = SensingConfig(), rng: np.random.Generator | None = None,
            expectation_shots: int | None = None) -> Prediction:
    """Coarse block classification, then the chosen block's fine model on a fresh sensing round."""
    pt = tx.point if isinstance(tx, geo.TxLocation) else np.asarray(tx, dtype=float)
    return pqc_two_batch(coarse, fine, grid, pt[None], layout, cfg, [rng], expectation_shots)[0]
