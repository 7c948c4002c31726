"""Experiment configuration: JSON schema, dotted overrides and validation.

A config file is a JSON object; every key is optional and missing keys take
the defaults in :data:`DEFAULTS`.  Unknown keys are errors.  Overrides use
dotted paths (``grid.n=4``) and JSON values (strings may be left unquoted).
"""
from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError, OutOfRange
from .pqc.train import TrainConfig
from .sensing import SensingConfig

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
SCHEMES = ("qsd-one", "qsd-two", "pqc-one", "pqc-two")
SETTINGS = ("continuous", "discrete")
PREDICTORS = ("auto", "classifier", "regression")
SWEEP_KEYS = ("grid.n", "sensors.count")
MAX_QSD_SENSORS = 8
MAX_PQC_SENSORS = 16

DEFAULTS: dict = {
    "format_version": FORMAT_VERSION,
    "seed": 1,
    "grid": {"n": 16},
    "sensors": {"count": 8},
    "scheme": "qsd-one",
    "setting": "continuous",
    "predictor": "auto",
    "shots": 1000,
    "repetitions": None,  # None: 1 for continuous, 10 for discrete
    "expectation_shots": None,  # None: exact expectations
    "samples_per_cell": 100,
    "sensing": SensingConfig().to_dict(),
    "training": {"epochs": 80, "batch_size": 32, "learning_rate": 1e-2, "blocks": 4},
    "output": {"dir": "results"},
    "cache": {"dir": None},
    "threads": 1,
    "sweep": {"key": "grid.n", "values": [2, 4, 8, 12, 16], "schemes": list(SCHEMES)},
}

# keys whose value may be null
_NULLABLE = {"repetitions", "expectation_shots", "cache.dir"}


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


_SCHEMA = _flatten(DEFAULTS)


def _set_dotted(d: dict, key: str, value) -> None:
    parts = key.split(".")
    for p in parts[:-1]:
        d = d.setdefault(p, {})
    d[parts[-1]] = value


def _check_type(key: str, value):
    """Coerce ``value`` to the schema type of ``key`` or raise ConfigError."""
    default = _SCHEMA[key]
    if value is None:
        if key in _NULLABLE:
            return None
        raise ConfigError(key, "may not be null")
    if key in ("repetitions", "expectation_shots") or isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError(key, f"expected a finite number, got {value!r}")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(key, f"expected a list, got {value!r}")
        return list(value)
    if key == "cache.dir" or isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {value!r}")
        return value
    return value


def merge(raw: dict, overrides=()) -> dict:
    """Defaults, then ``raw``, then ``key=value`` overrides; returns a nested dict."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    flat = dict(_SCHEMA)
    for key, value in _flatten(raw).items():
        if key not in _SCHEMA:
            raise ConfigError(key, "unknown config key")
        flat[key] = _check_type(key, value)
    for item in overrides:
        key, sep, text = item.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(key or item, "override must look like key=value")
        if key not in _SCHEMA:
            raise ConfigError(key, "unknown config key")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        flat[key] = _check_type(key, value)
    nested: dict = {}
    for key, value in flat.items():
        _set_dotted(nested, key, copy.deepcopy(value))
    return nested


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    grid_n: int
    sensor_count: int
    scheme: str
    setting: str
    predictor: str  # resolved: classifier or regression
    shots: int
    repetitions: int
    expectation_shots: int | None
    samples_per_cell: int
    sensing: SensingConfig
    training: TrainConfig
    output_dir: str
    cache_dir: str | None
    threads: int
    sweep_key: str
    sweep_values: tuple
    sweep_schemes: tuple

    @property
    def two_level(self) -> bool:
        return self.scheme.endswith("-two")

    @property
    def is_pqc(self) -> bool:
        return self.scheme.startswith("pqc")

    def to_dict(self) -> dict:
        """Fully resolved nested config; feeding it back reproduces this object."""
        return {
            "format_version": FORMAT_VERSION,
            "seed": self.seed,
            "grid": {"n": self.grid_n},
            "sensors": {"count": self.sensor_count},
            "scheme": self.scheme,
            "setting": self.setting,
            "predictor": self.predictor,
            "shots": self.shots,
            "repetitions": self.repetitions,
            "expectation_shots": self.expectation_shots,
            "samples_per_cell": self.samples_per_cell,
            "sensing": self.sensing.to_dict(),
            "training": {k: v for k, v in self.training.to_dict().items() if k in DEFAULTS["training"]},
            "output": {"dir": self.output_dir},
            "cache": {"dir": self.cache_dir},
            "threads": self.threads,
            "sweep": {"key": self.sweep_key, "values": list(self.sweep_values), "schemes": list(self.sweep_schemes)},
        }

    def result_dict(self) -> dict:
        """The keys that can change results (no paths or thread counts)."""
        d = self.to_dict()
        for k in ("output", "cache", "threads", "sweep"):
            d.pop(k)
        return d

    def with_overrides(self, overrides) -> "ExperimentConfig":
        return build(merge(self.to_dict(), overrides))


def _require(cond: bool, key: str, message: str) -> None:
    if not cond:
        raise ConfigError(key, message)


def build(nested: dict) -> ExperimentConfig:
    """Validate a merged config (see :func:`merge`) into an ExperimentConfig."""
    d = nested
    _require(d["format_version"] == FORMAT_VERSION, "format_version", f"only version {FORMAT_VERSION} is supported")
    _require(0 <= d["seed"] < 2**64, "seed", "must be an unsigned 64-bit integer")
    _require(2 <= d["grid"]["n"] <= 16, "grid.n", "must be between 2 and 16")
    count = d["sensors"]["count"]
    _require(count in (4, 8, 16), "sensors.count", "must be 4, 8 or 16")
    scheme, setting = d["scheme"], d["setting"]
    _require(scheme in SCHEMES, "scheme", f"must be one of {', '.join(SCHEMES)}")
    _require(setting in SETTINGS, "setting", f"must be one of {', '.join(SETTINGS)}")
    if scheme.startswith("qsd"):
        _require(count <= MAX_QSD_SENSORS, "sensors.count", f"QSD schemes support at most {MAX_QSD_SENSORS} sensors")
    else:
        _require(count <= MAX_PQC_SENSORS, "sensors.count", f"PQC schemes support at most {MAX_PQC_SENSORS} sensors")
    predictor = d["predictor"]
    _require(predictor in PREDICTORS, "predictor", f"must be one of {', '.join(PREDICTORS)}")
    natural = "regression" if setting == "continuous" else "classifier"
    if predictor == "auto":
        predictor = natural
    elif predictor != natural and scheme.startswith("pqc"):
        log.warning("predictor %s with the %s setting (the default pairing is %s)", predictor, setting, natural)
    _require(d["shots"] >= 1, "shots", "must be at least 1")
    reps = d["repetitions"]
    if reps is None:
        reps = 1 if setting == "continuous" else 10
    _require(reps >= 1, "repetitions", "must be at least 1")
    es = d["expectation_shots"]
    _require(es is None or es >= 1, "expectation_shots", "must be null or at least 1")
    _require(d["samples_per_cell"] >= 1, "samples_per_cell", "must be at least 1")
    t = d["training"]
    _require(t["epochs"] >= 1, "training.epochs", "must be at least 1")
    _require(t["batch_size"] >= 1, "training.batch_size", "must be at least 1")
    _require(t["learning_rate"] >= 0, "training.learning_rate", "must be non-negative")
    _require(t["blocks"] >= 1, "training.blocks", "must be at least 1")
    s = d["sensing"]
    for key, value in s.items():
        _require(isinstance(value, float) and math.isfinite(value), f"sensing.{key}", "must be a finite number")
    try:
        sensing = SensingConfig(**s)
    except OutOfRange as exc:
        name = str(exc).split()[0]
        raise ConfigError(f"sensing.{name}", str(exc)) from None
    _require(d["threads"] >= 1, "threads", "must be at least 1")
    sw = d["sweep"]
    _require(sw["key"] in SWEEP_KEYS, "sweep.key", f"must be one of {', '.join(SWEEP_KEYS)}")
    _require(len(sw["values"]) > 0 and all(isinstance(v, int) and not isinstance(v, bool) for v in sw["values"]),
             "sweep.values", "must be a non-empty list of integers")
    _require(len(sw["schemes"]) > 0 and all(s in SCHEMES for s in sw["schemes"]),
             "sweep.schemes", f"entries must be among {', '.join(SCHEMES)}")
    return ExperimentConfig(
        seed=int(d["seed"]),
        grid_n=int(d["grid"]["n"]),
        sensor_count=int(count),
        scheme=scheme,
        setting=setting,
        predictor=predictor,
        shots=int(d["shots"]),
        repetitions=int(reps),
        expectation_shots=es,
        samples_per_cell=int(d["samples_per_cell"]),
        sensing=sensing,
        training=TrainConfig(epochs=t["epochs"], batch_size=t["batch_size"], learning_rate=t["learning_rate"],
                             blocks=t["blocks"]),
        output_dir=d["output"]["dir"],
        cache_dir=d["cache"]["dir"],
        threads=int(d["threads"]),
        sweep_key=sw["key"],
        sweep_values=tuple(sw["values"]),
        sweep_schemes=tuple(sw["schemes"]),
    )


def load_config(path=None, overrides=()) -> ExperimentConfig:
    """Read a config file (or a run manifest, whose ``config`` entry is used) and apply overrides."""
    raw: dict = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError("--config", f"config file not found: {p}")
        try:
            raw = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("--config", f"{p} is not valid JSON ({exc})") from None
        if isinstance(raw, dict) and "manifest_format" in raw and "config" in raw:
            raw = raw["config"]
    return build(merge(raw, overrides))
