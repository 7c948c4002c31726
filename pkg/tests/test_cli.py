import csv
import json

import numpy as np
import pytest

from qsnloc import cli
from qsnloc.pqc import model as pm


def run(*argv):
    return cli.main(list(argv))


@pytest.fixture
def exp(tmp_path):
    p = tmp_path / "exp.json"
    p.write_text(json.dumps({"grid": {"n": 8}, "scheme": "qsd-one", "shots": 20}))
    return p


class TestEval:
    def test_override_grid(self, exp, tmp_path):
        out = tmp_path / "o"
        assert run("eval", "--config", str(exp), "--set", "grid.n=4", "--out", str(out), "--quiet") == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["config"]["grid"]["n"] == 4
        assert summary["aggregates"]["n_records"] == 16
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 1 and manifest["config"]["grid"]["n"] == 4
        assert "wall_time_s" in manifest and manifest["formats"]["config"] == 1

    def test_manifest_reproduces(self, exp, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run("eval", "--config", str(exp), "--set", "grid.n=4", "--seed", "9", "--out", str(a), "--quiet") == 0
        assert run("eval", "--config", str(a / "manifest.json"), "--out", str(b), "--quiet") == 0
        for f in ("summary.json", "records.csv", "cdf.csv"):
            assert (a / f).read_bytes() == (b / f).read_bytes()

    def test_missing_config(self, tmp_path, capsys):
        missing = tmp_path / "absent.json"
        assert run("eval", "--config", str(missing)) == 1
        assert str(missing) in capsys.readouterr().err

    def test_unknown_key(self, exp, capsys):
        assert run("eval", "--config", str(exp), "--set", "grid.size=3") == 1
        assert "grid.size" in capsys.readouterr().err

    def test_bad_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        assert run("eval", "--config", str(p)) == 1

    def test_runtime_failure_exit_two(self, exp, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("")
        # output directory path runs through an existing file
        assert run("eval", "--config", str(exp), "--set", "grid.n=2", "--set", "sensors.count=4",
                   "--out", str(blocker / "sub"), "--quiet") == 2
        assert "Traceback" not in capsys.readouterr().err


class TestPipeline:
    def test_gen_data(self, tmp_path):
        out = tmp_path / "d"
        assert run("gen-data", "--set", "grid.n=4", "--set", "scheme=pqc-two", "--set", "samples_per_cell=2",
                   "--out", str(out), "--quiet") == 0
        names = sorted(p.name for p in out.glob("*.npz"))
        assert names == ["coarse.npz", "fine_0.npz", "fine_1.npz", "fine_2.npz", "fine_3.npz"]

    def test_build_pgm_and_inspect(self, tmp_path):
        out = tmp_path / "p"
        assert run("build-pgm", "--set", "grid.n=4", "--set", "scheme=qsd-two", "--out", str(out), "--quiet") == 0
        report = json.loads((out / "pgm_report.json").read_text())
        assert all(r["ok"] for r in report.values())
        assert run("inspect", str(out / "block.povm")) == 0

    def test_build_pgm_rejects_pqc(self, tmp_path):
        assert run("build-pgm", "--set", "scheme=pqc-one", "--out", str(tmp_path)) == 1

    def test_train_and_inspect(self, tmp_path):
        out = tmp_path / "t"
        assert run("train", "--set", "grid.n=2", "--set", "sensors.count=4", "--set", "scheme=pqc-one",
                   "--set", "samples_per_cell=3", "--set", "training.epochs=2", "--out", str(out), "--quiet") == 0
        path = out / "models" / "one.json"
        assert run("inspect", str(path)) == 0
        model = pm.load_model(path)
        assert len(model.meta["loss_history"]) == 2
        # corrupt the parameter count
        doc = json.loads(path.read_text())
        doc["head"]["weights"] = np.zeros((2, 3)).tolist()
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        assert run("inspect", str(bad)) == 1

    def test_inspect_garbage(self, tmp_path):
        p = tmp_path / "x.bin"
        p.write_bytes(b"\x00\x01\x02")
        assert run("inspect", str(p)) == 1


class TestSweep:
    def test_grid_sweep_rows(self, tmp_path):
        cfg = tmp_path / "sweep.json"
        cfg.write_text(json.dumps({"shots": 10, "sweep": {"key": "grid.n", "values": [2, 4], "schemes": ["qsd-one", "qsd-two"]}}))
        out = tmp_path / "s"
        assert run("sweep", "--config", str(cfg), "--out", str(out), "--quiet") == 0
        rows = list(csv.DictReader(open(out / "sweep.csv")))
        assert [(r["grid.n"], r["scheme"]) for r in rows] == [("2", "qsd-one"), ("2", "qsd-two"), ("4", "qsd-one"), ("4", "qsd-two")]
        assert all(r["status"] == "ok" for r in rows)

    def test_sensor_sweep_skips_invalid(self, tmp_path):
        cfg = tmp_path / "sweep.json"
        cfg.write_text(json.dumps({"grid": {"n": 4}, "shots": 10,
                                   "sweep": {"key": "sensors.count", "values": [4, 16], "schemes": ["qsd-one"]}}))
        out = tmp_path / "s"
        assert run("sweep", "--config", str(cfg), "--out", str(out), "--quiet") == 0
        rows = list(csv.DictReader(open(out / "sweep.csv")))
        assert rows[0]["status"] == "ok" and rows[1]["status"].startswith("skipped")
