"""Command-line driver: ``qsnloc <subcommand> --config exp.json [--set key=value ...]``.

Exit status: 0 on success, 1 for invalid configuration or input files, 2 for
failures while running.  Every subcommand that writes outputs also writes
``manifest.json`` (resolved config, seed, format versions, wall time).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from . import geometry as geo
from . import harness
from .config import FORMAT_VERSION, ExperimentConfig, load_config
from .errors import ConfigError, QsnLocError
from .pqc.model import MODEL_FORMAT, check_model, load_model, save_model
from .qsd import POVM_FORMAT_VERSION, POVM_MAGIC, QsdLocalizer, load_povm, probability_of_error, save_povm

log = logging.getLogger("qsnloc")
MANIFEST_FORMAT = "qsnloc.manifest/1"
SWEEP_COLUMNS = ("value", "scheme", "setting", "predictor", "n_records", "mean_l_err", "cc_acc", "block_acc", "status")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config JSON (or a manifest.json from an earlier run)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key, e.g. grid.n=4 (repeatable)")
    p.add_argument("--out", help="output directory (default: output.dir from the config)")
    p.add_argument("--seed", type=int, help="override the seed")
    p.add_argument("--threads", type=int, help="cap on evaluation worker threads")
    v = p.add_mutually_exclusive_group()
    v.add_argument("--quiet", action="store_true", help="only warnings and errors")
    v.add_argument("--verbose", action="store_true", help="debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsnloc", description="Transmitter localization with quantum sensor networks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "gen-data": "generate training datasets (.npz) for the configured scheme",
        "build-pgm": "build and save the PGMs of a QSD scheme",
        "train": "train (or load cached) PQC models",
        "eval": "run an experiment and write summary.json, records.csv, cdf.csv",
        "sweep": "run the configured sweep and write sweep.csv",
        "inspect": "validate a saved POVM or model file",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        if name == "inspect":
            p.add_argument("path", help=".povm file or model JSON")
        _common(p)
    return parser


def _configure_logging(args) -> None:
    level = logging.WARNING if args.quiet else logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)


def _resolve(args) -> ExperimentConfig:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.threads is not None:
        overrides.append(f"threads={args.threads}")
    if args.out is not None:
        overrides.append(f"output.dir={json.dumps(args.out)}")
    return load_config(args.config, overrides)


def _write_manifest(out: Path, command: str, config: ExperimentConfig | None, started: float, outputs) -> None:
    doc = {
        "manifest_format": MANIFEST_FORMAT,
        "command": command,
        "package_version": __version__,
        "formats": {
            "config": FORMAT_VERSION,
            "summary": harness.SUMMARY_FORMAT,
            "model": MODEL_FORMAT,
            "povm": POVM_FORMAT_VERSION,
        },
        "config": None if config is None else config.to_dict(),
        "seed": None if config is None else config.seed,
        "wall_time_s": round(time.perf_counter() - started, 3),
        "outputs": sorted(str(p) for p in outputs),
    }
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _setup(config: ExperimentConfig):
    grid = geo.make_grid(config.grid_n)
    return grid, geo.deploy_sensors(grid, config.sensor_count)


def cmd_gen_data(config: ExperimentConfig, out: Path) -> list[str]:
    grid, layout = _setup(config)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for job in harness.model_jobs(config, grid):
        ds = harness.job_dataset(job, config, grid, layout)
        name = f"{job.name}.npz"
        ds.save(out / name)
        log.info("%s: %d samples, %d qubits, %d classes", name, len(ds), ds.qubits, ds.n_classes)
        written.append(name)
    return written


def cmd_build_pgm(config: ExperimentConfig, out: Path) -> list[str]:
    if config.is_pqc:
        raise ConfigError("scheme", "build-pgm needs a QSD scheme (qsd-one or qsd-two)")
    grid, layout = _setup(config)
    loc = QsdLocalizer(grid, layout, config.sensing)
    stages = [("block", -1)] + [("fine", b) for b in range(grid.n_blocks)] if config.two_level else [("cell", -1)]
    out.mkdir(parents=True, exist_ok=True)
    report, written = {}, []
    for level, block in stages:
        targets, povm = loc.stage(level, block)
        name = level if block < 0 else f"{level}_{block}"
        save_povm(out / f"{name}.povm", povm)
        check = povm.check()
        check["probability_of_error"] = probability_of_error(povm, targets)
        report[name] = check
        written.append(f"{name}.povm")
        log.info("%s: %d targets, dim %d, PoE %.4f, ok=%s", name, targets.n, povm.dim,
                 check["probability_of_error"], check["ok"])
    (out / "pgm_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return written + ["pgm_report.json"]


def cmd_train(config: ExperimentConfig, out: Path) -> list[str]:
    if not config.is_pqc:
        raise ConfigError("scheme", "train needs a PQC scheme (pqc-one or pqc-two)")
    grid, layout = _setup(config)
    models = harness.obtain_models(config, grid, layout, config.cache_dir)
    (out / "models").mkdir(parents=True, exist_ok=True)
    written = []
    for name, model in sorted(models.items()):
        save_model(out / "models" / f"{name}.json", model)
        written.append(f"models/{name}.json")
        hist = model.meta.get("loss_history", [])
        log.info("%s: final training loss %s", name, hist[-1] if hist else "n/a")
    return written


def cmd_eval(config: ExperimentConfig, out: Path) -> list[str]:
    result = harness.run_experiment(config, out, config.cache_dir, config.threads)
    agg = result.aggregates
    log.info("mean L_err %.3f m, CC_acc %.4f over %d records", agg["mean_l_err"], agg["cc_acc"], agg["n_records"])
    return ["summary.json", "records.csv", "cdf.csv"]


def sweep_rows(config: ExperimentConfig, out: Path) -> list[dict]:
    rows = []
    short = config.sweep_key.split(".")[0]
    for value in config.sweep_values:
        for scheme in config.sweep_schemes:
            row = {"value": value, "scheme": scheme, "setting": config.setting}
            try:
                cfg = config.with_overrides([f"{config.sweep_key}={value}", f"scheme={scheme}"])
                grid = geo.make_grid(cfg.grid_n)
                geo.deploy_sensors(grid, cfg.sensor_count)
            except QsnLocError as exc:
                rows.append({**row, "predictor": "", "status": f"skipped: {exc}"})
                log.warning("skipping %s=%s %s: %s", config.sweep_key, value, scheme, exc)
                continue
            log.info("sweep %s=%s %s", config.sweep_key, value, scheme)
            res = harness.run_experiment(cfg, out / f"{short}{value}_{scheme}", cfg.cache_dir, cfg.threads)
            agg = res.aggregates
            rows.append({**row, "predictor": cfg.predictor, "n_records": agg["n_records"],
                         "mean_l_err": harness.fmt(agg["mean_l_err"]), "cc_acc": harness.fmt(agg["cc_acc"]),
                         "block_acc": harness.fmt(agg["block_acc"]), "status": "ok"})
    return rows


def cmd_sweep(config: ExperimentConfig, out: Path) -> list[str]:
    rows = sweep_rows(config, out)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=(config.sweep_key,) + SWEEP_COLUMNS[1:], lineterminator="\n", restval="")
    w.writeheader()
    for r in rows:
        w.writerow({config.sweep_key: r["value"], **{k: v for k, v in r.items() if k != "value"}})
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(buf.getvalue())
    if not logging.getLogger().isEnabledFor(logging.INFO):
        return ["sweep.csv"]
    sys.stdout.write(buf.getvalue())
    return ["sweep.csv"]


def inspect_file(path) -> dict:
    """Validate a POVM dump or a model JSON; the report has an ``ok`` entry."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError("path", f"file not found: {p}")
    with open(p, "rb") as fh:
        head = fh.read(len(POVM_MAGIC))
    if head == POVM_MAGIC:
        povm = load_povm(p)
        report = {"kind": "povm", "outcomes": povm.n_outcomes, "has_reject": povm.has_reject}
        report.update(povm.check())
        return report
    try:
        model = load_model(p)
    except (json.JSONDecodeError, UnicodeDecodeError, KeyError, TypeError) as exc:
        raise ValueError(f"{p}: neither a POVM dump nor a model file ({exc})") from None
    report = {"kind": "model", "head": model.kind, "outputs": model.head.n_out}
    report.update(check_model(model))
    return report


COMMANDS = {
    "gen-data": cmd_gen_data,
    "build-pgm": cmd_build_pgm,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args)
    started = time.perf_counter()
    try:
        if args.command == "inspect":
            report = inspect_file(args.path)
            print(json.dumps(report, indent=2, sort_keys=True))
            if args.out:
                out = Path(args.out)
                out.mkdir(parents=True, exist_ok=True)
                (out / "inspect.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
                _write_manifest(out, args.command, None, started, ["inspect.json"])
            print("PASS" if report["ok"] else "FAIL", file=sys.stderr)
            return 0 if report["ok"] else 1
        config = _resolve(args)
        out = Path(config.output_dir)
        outputs = COMMANDS[args.command](config, out)
        _write_manifest(out, args.command, config, started, outputs)
        return 0
    except ConfigError as exc:
        print(f"qsnloc: config error at {exc}", file=sys.stderr)
        return 1
    except (QsnLocError, ValueError) as exc:
        if isinstance(exc, QsnLocError) and not isinstance(exc, ValueError):
            print(f"qsnloc: {type(exc).__name__}: {exc}", file=sys.stderr)
            return 2
        print(f"qsnloc: invalid input: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("qsnloc: interrupted", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report, never a bare traceback
        log.debug("failure", exc_info=True)
        print(f"qsnloc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
