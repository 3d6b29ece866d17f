import csv
import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from fractorsion.cli import EXIT_CONFIG, EXIT_ERROR, EXIT_FAIL, EXIT_OK, EXIT_USAGE, run

BASE = {
    "s": 0.5,
    "p": 2.0,
    "lattice": {"dim": 1, "h": 0.0625, "box": [-1.25, 1.25]},
    "domain": {"type": "union", "children": [{"type": "interval", "a": -1, "b": -0.25}, {"type": "interval", "a": 0.25, "b": 1}]},
}


@pytest.fixture
def workdir(tmp_path):
    return tmp_path


def _config(path, **overrides):
    cfg = dict(BASE, **overrides)
    path.write_text(json.dumps(cfg))
    return str(path)


def _run(workdir, command, cfg=None, *extra, **overrides):
    out = workdir / "out"
    argv = [command, "--out", str(out), "--cache-dir", str(workdir / "cache")]
    if cfg is not False:
        argv += ["--config", _config(workdir / "cfg.json", **overrides)]
    return run(argv + list(extra)), out


def test_torsion_outputs(workdir):
    code, out = _run(workdir, "torsion", radii=[0.5, 2.0])
    assert code == EXIT_OK
    js = json.loads((out / "torsion.json").read_text())
    w = np.load(out / "w.npy")
    cells = np.load(out / "cells.npy")
    assert w.shape == (cells.shape[0],) == (js["cells"],)
    assert js["l1_norm"] == pytest.approx(w.sum() / 16)
    with open(out / "trace.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["r", "linf", "l1"] and len(rows) == 3
    with open(out / "levels.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["k", "measure", "eps"] and len(rows) == 513
    man = json.loads((out / "manifest.json").read_text())
    assert man["exit_code"] == 0 and man["command"] == "torsion"
    for name, digest in man["outputs"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert man["csv_schemas"]["trace.csv"]["columns"] == ["r", "linf", "l1"]


def test_rerun_is_reproducible(workdir):
    _run(workdir, "torsion")
    first = json.loads((workdir / "out" / "manifest.json").read_text())
    _run(workdir, "torsion")
    second = json.loads((workdir / "out" / "manifest.json").read_text())
    assert first["outputs"] == second["outputs"]
    assert first["inputs_hash"] == second["inputs_hash"]


def test_lambda_with_oracle(workdir):
    code, out = _run(workdir, "lambda", q=[1, 2], solver={"restarts": 2})
    assert code == EXIT_OK
    js = json.loads((out / "lambda.json").read_text())
    q2 = js["results"][1]
    assert q2["rayleigh"]["lambda_est"] == pytest.approx(q2["eigen_oracle"]["lambda"], rel=1e-8)


def test_hardy(workdir):
    code, out = _run(workdir, "hardy", samples=5, remainder=True, p=3.0)
    assert code == EXIT_OK
    lines = (out / "hardy.jsonl").read_text().splitlines()
    assert len(lines) == 5
    summary = json.loads((out / "hardy_summary.json").read_text())
    assert summary["failures"] == 0 and "remainder" in summary


def test_gn(workdir):
    code, out = _run(workdir, "gn", dim=1, s=0.3, q=1, r=2, widths=[0.5], h=0.0625)
    assert code in (EXIT_OK, EXIT_FAIL)
    js = json.loads((out / "gn.json").read_text())
    assert js["form"] == "GN1" and js["constant"] > 0


def test_scalar_fuzz(workdir):
    code, out = _run(workdir, "scalar-fuzz", False, "--p", "1.5", "--p", "3", "--beta", "2", "--samples", "2000")
    assert code == EXIT_OK
    lines = [json.loads(x) for x in (out / "fuzz.jsonl").read_text().splitlines()]
    assert [x["name"] for x in lines] == ["picone", "power", "picone", "power"]


def test_explore(workdir):
    fam = {"kind": "interval", "lengths": [0.5, 1, 2], "h": 0.0625}
    code, out = _run(workdir, "explore", family=fam, q=[1, 2], solver={"restarts": 1})
    assert code == EXIT_OK
    with open(out / "explore.csv") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 7 and rows[0][0] == "label"
    summary = json.loads((out / "explore_summary.json").read_text())
    assert summary["passed"] is True


@pytest.mark.parametrize(
    "overrides",
    [
        {"s": 1.5},
        {"p": 1.0},
        {"q": [0.5]},
        {"solver": {"tol": 1}},
        {"solver": {"epsilon_schedule": [1, 2]}},
        {"domain": {"type": "torus"}},
        {"domain": {"type": "interval", "a": 5, "b": 6}},
        {"lattice": {"dim": 1, "h": 0.3, "box": [-1, 1]}},
        {"pair_rule": "simpson"},
        {"lattice": {"dim": 1, "h": 0.0625, "box": [[-1.25], [1.25]]}},
    ],
)
def test_config_errors(workdir, overrides):
    code, out = _run(workdir, "hardy", **overrides)
    assert code == EXIT_CONFIG
    assert not out.exists()


def test_missing_and_broken_config(workdir):
    assert run(["torsion", "--out", str(workdir / "o")]) == EXIT_CONFIG
    bad = workdir / "bad.json"
    bad.write_text("{not json")
    assert run(["torsion", "--config", str(bad)]) == EXIT_CONFIG
    assert run(["torsion", "--config", str(workdir / "nope.json")]) == EXIT_CONFIG
    code, _ = _run(workdir, "lambda")  # no q
    assert code == EXIT_CONFIG
    code, _ = _run(workdir, "explore", q=[1], family={"kind": "spiral"})
    assert code == EXIT_CONFIG
    code, _ = _run(workdir, "torsion", None, "--threads", "0")
    assert code == EXIT_CONFIG


def test_usage_errors(capsys):
    assert run([]) == EXIT_USAGE
    assert run(["nonsense"]) == EXIT_USAGE
    assert run(["torsion", "--bogus"]) == EXIT_USAGE
    assert "usage error" in capsys.readouterr().err


def test_runtime_error(workdir):
    # a domain touching the lattice box is valid config but cannot be solved
    code, out = _run(workdir, "torsion", lattice={"dim": 1, "h": 0.25, "box": [-1, 1]}, domain={"type": "interval", "a": -1, "b": 1})
    assert code == EXIT_ERROR
    assert not out.exists()


def test_cache_stat_and_gc(workdir, capsys):
    _run(workdir, "torsion")
    cache = workdir / "cache"
    (cache / ".tmp-dead.ftkt").write_bytes(b"x")
    assert run(["cache", "stat", "--cache-dir", str(cache)]) == EXIT_OK
    info = json.loads(capsys.readouterr().out)
    assert info["entries"] == 1 and info["bytes"] > 0
    assert run(["cache", "gc", "--cache-dir", str(cache), "--older-than", "1"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out) == {"removed": 0}
    assert run(["cache", "gc", "--cache-dir", str(cache), "--all"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out) == {"removed": 1}
    assert not list(cache.glob("*.ftkt")) and not list(cache.glob(".tmp-*"))


def test_console_script(workdir):
    proc = subprocess.run([sys.executable, "-m", "fractorsion.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "fractorsion" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "fractorsion.cli", "torsion", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "--cache-dir" in proc.stdout
