"""Datasets, metrics and end-to-end experiment runs.

Random streams (``qmath.make_rng(seed, *stream)``):

* ``(seed, 1, level, block)``: training-data TX positions and noise
* ``(seed, 2, level, block)``: model initialization and batch shuffling
* ``(seed, 3, rep, cell)``: one evaluation TX, its sensing noise and measurements

so evaluation never reuses a training draw, and every evaluated TX has its
own generator (thread count and batching do not change the output).
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import geometry as geo
from .config import ExperimentConfig
from .data import Dataset
from .qmath import make_rng
from .qsd import Prediction, QsdLocalizer
from .sensing import SensingConfig, distances, draw_noise, phase_shift
from .pqc.localize import pqc_one_batch, pqc_two_batch
from .pqc.model import CLASSIFIER, PqcModel, load_model, save_model
from .pqc.train import TrainConfig, train

log = logging.getLogger(__name__)

STREAM_TRAIN, STREAM_INIT, STREAM_EVAL = 1, 2, 3
LEVEL_CODES = {"one": 0, "coarse": 1, "fine": 2}
SUMMARY_FORMAT = "qsnloc.summary/1"
RECORD_COLUMNS = ("tx_x", "tx_y", "pred_x", "pred_y", "l_err", "true_cell", "pred_cell", "coarse_block", "pred_block")
EVAL_CHUNK = 64


def fmt(x: float) -> str:
    """Nine significant digits, the precision of every persisted float."""
    return f"{x:.9g}"


def exclusion_sensors(grid: geo.GridGeometry, layout: geo.SensorLayout) -> np.ndarray:
    """Sensors a transmitter must keep 5 m away from.

    Fine sensors of one-cell blocks are never used (there is nothing to
    decide within such a block), so they are left out; otherwise no point of
    the cell would qualify.
    """
    if grid.cells_per_block == 1:
        return np.asarray(layout.coarse, dtype=float)
    return layout.all_sensors()


def generate_dataset(grid: geo.GridGeometry, layout: geo.SensorLayout, setting: str, samples_per_cell: int,
                     cfg: SensingConfig, rng: np.random.Generator, level: str = "one", block: int = -1) -> Dataset:
    """Labelled noisy sensor states.

    ``one``: every cell, coarse sensors, labelled by cell.  ``coarse``: every
    cell, coarse sensors, labelled by block.  ``fine``: the cells of ``block``,
    that block's four sensors, labelled by the cell's position in the block.
    """
    if samples_per_cell < 1:
        raise ValueError("samples_per_cell must be at least 1")
    if level == "fine":
        cells = grid.cells_in_block(block)
        sensors = layout.fine[block]
        domain = grid.block_rect(block)
        n_classes = len(cells)
    elif level in ("one", "coarse"):
        cells = list(range(grid.n_cells))
        sensors = layout.coarse
        domain = (0.0, 0.0, grid.side, grid.side)
        n_classes = grid.n_cells if level == "one" else grid.n_blocks
    else:
        raise ValueError(f"unknown dataset level {level!r}")
    avoid = exclusion_sensors(grid, layout)
    points, labels = [], []
    for local, cell in enumerate(cells):
        for _ in range(samples_per_cell):
            points.append(geo.sample_tx(grid, cell, setting, rng, avoid).point)
        label = local if level == "fine" else grid.block_of_cell(cell) if level == "coarse" else cell
        labels.extend([label] * samples_per_cell)
    points = np.array(points)
    sensors = np.asarray(sensors, dtype=float)
    noise = draw_noise(rng, (len(points), len(sensors)), cfg)
    phases = phase_shift(distances(points, sensors), noise, cfg)
    return Dataset(labels=np.array(labels, dtype=int), coords=points, n_classes=n_classes,
                   domain=tuple(float(v) for v in domain), phases=phases)


# ---------------------------------------------------------------- evaluation

@dataclass(frozen=True)
class Record:
    tx: tuple[float, float]
    pred: tuple[float, float]
    l_err: float
    true_cell: int
    pred_cell: int
    coarse_block: int  # coarse-stage outcome, -1 for one-level schemes
    pred_block: int

    def row(self) -> list[str]:
        return [fmt(self.tx[0]), fmt(self.tx[1]), fmt(self.pred[0]), fmt(self.pred[1]), fmt(self.l_err),
                str(self.true_cell), str(self.pred_cell), str(self.coarse_block), str(self.pred_block)]


@dataclass
class RunResult:
    records: list[Record]
    aggregates: dict = field(default_factory=dict)

    @property
    def mean_l_err(self) -> float:
        return self.aggregates["mean_l_err"]

    @property
    def cc_acc(self) -> float:
        return self.aggregates["cc_acc"]

    def cdf(self) -> tuple[np.ndarray, np.ndarray]:
        return cdf_points([r.l_err for r in self.records])


def cdf_points(errors: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Empirical CDF: sorted errors and cumulative probabilities ``(i + 1) / N``."""
    e = np.sort(np.asarray(errors, dtype=float))
    return e, np.arange(1, len(e) + 1) / max(len(e), 1)


def aggregate(records: Sequence[Record], grid: geo.GridGeometry) -> dict:
    """Aggregates from records whose floats have already been rounded to 9 digits."""
    n = len(records)
    errs = [r.l_err for r in records]
    true_blocks = [grid.block_of_cell(r.true_cell) for r in records]
    return {
        "n_records": n,
        "mean_l_err": math.fsum(errs) / n if n else float("nan"),
        "median_l_err": float(np.median(errs)) if n else float("nan"),
        "max_l_err": max(errs) if n else float("nan"),
        "cc_acc": sum(r.true_cell == r.pred_cell for r in records) / n if n else float("nan"),
        "block_acc": sum(b == r.pred_block for b, r in zip(true_blocks, records)) / n if n else float("nan"),
    }


def _make_record(grid: geo.GridGeometry, tx: geo.TxLocation, pred: Prediction) -> Record:
    # round through the persisted representation so aggregates recompute exactly from files
    tx_pt = (float(fmt(tx.x)), float(fmt(tx.y)))
    p = (float(fmt(pred.point[0])), float(fmt(pred.point[1])))
    l_err = float(fmt(math.hypot(tx.x - pred.point[0], tx.y - pred.point[1])))
    pred_block = grid.block_of_cell(pred.cell)
    return Record(tx_pt, p, l_err, tx.cell_id, int(pred.cell), int(pred.coarse_block), pred_block)


Predictor = Callable[[np.ndarray, list], list]


def eval_set(grid: geo.GridGeometry, layout: geo.SensorLayout, setting: str, repetitions: int,
             seed: int) -> tuple[list[geo.TxLocation], list[np.random.Generator]]:
    """One TX per cell per repetition, each with its own generator (already advanced past the TX draw)."""
    avoid = exclusion_sensors(grid, layout)
    txs, rngs = [], []
    for rep in range(repetitions):
        for cell in range(grid.n_cells):
            rng = make_rng(seed, STREAM_EVAL, rep, cell)
            txs.append(geo.sample_tx(grid, cell, setting, rng, avoid))
            rngs.append(rng)
    return txs, rngs


def evaluate(grid: geo.GridGeometry, txs: Sequence[geo.TxLocation], rngs: Sequence, predictor: Predictor,
             threads: int = 1, chunk: int = EVAL_CHUNK) -> RunResult:
    """Run ``predictor(points, rngs) -> [Prediction]`` over fixed-size chunks and aggregate in TX order."""
    points = np.array([t.point for t in txs]).reshape(-1, 2)
    spans = [(i, min(i + chunk, len(txs))) for i in range(0, len(txs), chunk)]

    def run(span):
        a, b = span
        return predictor(points[a:b], list(rngs[a:b]))

    if threads > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, spans))
    else:
        parts = [run(s) for s in spans]
    preds = [p for part in parts for p in part]
    records = [_make_record(grid, t, p) for t, p in zip(txs, preds)]
    return RunResult(records, aggregate(records, grid))


# ------------------------------------------------------------ trained models

def fingerprint(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


@dataclass(frozen=True)
class ModelJob:
    """One PQC model to train: which dataset, which head, which random streams."""

    level: str  # one, coarse or fine
    block: int
    kind: str
    key: dict

    @property
    def name(self) -> str:
        return self.level if self.level != "fine" else f"fine_{self.block}"


def model_jobs(config: ExperimentConfig, grid: geo.GridGeometry) -> list[ModelJob]:
    base = {
        "grid": grid.to_dict(),
        "sensors": config.sensor_count,
        "setting": config.setting,
        "samples_per_cell": config.samples_per_cell,
        "sensing": config.sensing.to_dict(),
        "training": config.training.to_dict(),
        "seed": config.seed,
    }
    if not config.two_level:
        return [ModelJob("one", 0, config.predictor, {**base, "level": "one", "kind": config.predictor})]
    jobs = [ModelJob("coarse", 0, CLASSIFIER, {**base, "level": "coarse", "kind": CLASSIFIER})]
    if grid.cells_per_block > 1:
        for b in range(grid.n_blocks):
            jobs.append(ModelJob("fine", b, config.predictor,
                                 {**base, "level": "fine", "block": b, "kind": config.predictor}))
    return jobs


def job_dataset(job: ModelJob, config: ExperimentConfig, grid, layout) -> Dataset:
    rng = make_rng(config.seed, STREAM_TRAIN, LEVEL_CODES[job.level], job.block)
    return generate_dataset(grid, layout, config.setting, config.samples_per_cell, config.sensing, rng,
                            job.level, job.block)


def train_job(job: ModelJob, config: ExperimentConfig, grid, layout, dataset: Dataset | None = None) -> PqcModel:
    if dataset is None:
        dataset = job_dataset(job, config, grid, layout)
    rng = make_rng(config.seed, STREAM_INIT, LEVEL_CODES[job.level], job.block)
    if job.level == "fine":
        cells = grid.cells_in_block(job.block)
    elif job.level == "one":
        cells = list(range(grid.n_cells))
    else:
        cells = None
    if cells is not None:
        points, cells_arr = geo.centers(grid, "cell")[cells], np.array(cells)
    else:
        points, cells_arr = geo.centers(grid, "block"), np.full(grid.n_blocks, -1)
    result = train(config.training, dataset, rng, job.kind, points, cells_arr)
    loss = np.asarray(result.history)
    if not np.all(np.isfinite(loss)):
        raise FloatingPointError(f"non-finite training loss for model {job.name}")
    meta = {"fingerprint": fingerprint(job.key), "job": job.key, "loss_history": [float(fmt(v)) for v in loss]}
    return PqcModel(result.model.circuit, result.model.head, result.model.coord_scale,
                    result.model.label_points, result.model.label_cells, meta)


def obtain_models(config: ExperimentConfig, grid, layout, cache_dir=None) -> dict[str, PqcModel]:
    """Train (or load cached) every model the scheme needs, keyed by job name."""
    models = {}
    cache = Path(cache_dir) / "models" if cache_dir else None
    if cache is not None:
        cache.mkdir(parents=True, exist_ok=True)
    for job in model_jobs(config, grid):
        path = cache / f"{fingerprint(job.key)}.json" if cache is not None else None
        if path is not None and path.is_file():
            models[job.name] = load_model(path)
            log.info("model %s loaded from cache", job.name)
            continue
        log.info("training model %s (%s, %d qubits)", job.name, job.kind,
                 len(layout.fine[job.block]) if job.level == "fine" else len(layout.coarse))
        models[job.name] = train_job(job, config, grid, layout)
        if path is not None:
            save_model(path, models[job.name])
    return models


# ---------------------------------------------------------------- schemes

def scheme_predictor(config: ExperimentConfig, grid, layout, models: dict | None = None) -> Predictor:
    cfg = config.sensing
    if config.scheme in ("qsd-one", "qsd-two"):
        loc = QsdLocalizer(grid, layout, cfg)
        loc.prepare(two_level=config.two_level)
        step = loc.two if config.two_level else loc.one
        return lambda pts, rngs: [step(p, config.shots, r) for p, r in zip(pts, rngs)]
    if models is None:
        raise ValueError("PQC schemes need trained models")
    es = config.expectation_shots
    if config.scheme == "pqc-one":
        model = models["one"]
        return lambda pts, rngs: pqc_one_batch(model, grid, pts, layout.coarse, cfg, rngs, es)
    fine = {int(name.split("_")[1]): m for name, m in models.items() if name.startswith("fine_")}
    coarse = models["coarse"]
    return lambda pts, rngs: pqc_two_batch(coarse, fine, grid, pts, layout, cfg, rngs, es)


def write_records(path, records: Sequence[Record]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for r in records:
        w.writerow(r.row())
    Path(path).write_text(buf.getvalue())


def read_records(path) -> list[Record]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [Record((float(r["tx_x"]), float(r["tx_y"])), (float(r["pred_x"]), float(r["pred_y"])),
                   float(r["l_err"]), int(r["true_cell"]), int(r["pred_cell"]), int(r["coarse_block"]),
                   int(r["pred_block"])) for r in rows]


def write_cdf(path, records: Sequence[Record]) -> None:
    e, p = cdf_points([r.l_err for r in records])
    lines = ["l_err,cum_prob"] + [f"{fmt(a)},{fmt(b)}" for a, b in zip(e, p)]
    Path(path).write_text("\n".join(lines) + "\n")


def _json_floats(obj):
    if isinstance(obj, float):
        return float(fmt(obj)) if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _json_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_floats(v) for v in obj]
    return obj


def write_summary(path, config: ExperimentConfig, result: RunResult, extra: dict | None = None) -> None:
    # the config echo keeps full precision so it can be fed back; results use 9 digits
    doc = {"format": SUMMARY_FORMAT, "config": config.result_dict(), "aggregates": _json_floats(result.aggregates)}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def run_experiment(config: ExperimentConfig, out_dir=None, cache_dir=None, threads: int | None = None) -> RunResult:
    """Build or train the scheme, evaluate it and write ``summary.json``, ``records.csv`` and ``cdf.csv``.

    Output files depend only on the result-relevant config, so repeating a
    run with the same seed reproduces them byte for byte.
    """
    grid = geo.make_grid(config.grid_n)
    layout = geo.deploy_sensors(grid, config.sensor_count)
    cache_dir = cache_dir if cache_dir is not None else config.cache_dir
    models = obtain_models(config, grid, layout, cache_dir) if config.is_pqc else None
    predictor = scheme_predictor(config, grid, layout, models)
    txs, rngs = eval_set(grid, layout, config.setting, config.repetitions, config.seed)
    log.info("evaluating %s on %d transmitter locations", config.scheme, len(txs))
    result = evaluate(grid, txs, rngs, predictor, threads or config.threads)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_records(out / "records.csv", result.records)
        write_cdf(out / "cdf.csv", result.records)
        extra = None
        if models:
            extra = {"models": {k: m.meta.get("fingerprint") for k, m in sorted(models.items())}}
        write_summary(out / "summary.json", config, result, extra)
    return result
