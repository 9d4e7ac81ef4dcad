import json
import subprocess
import sys

import numpy as np
import pytest

from hessianlab.cli import config_digest, main
from hessianlab.grid import DomainSpec, sample, save_field

SOLVE = {"command": "solve", "n": 2, "m": 2,
         "domain": {"kind": "ball", "radius": 1.0, "half_width": 1.5, "h": 0.25},
         "boundary": "2*absz2", "rhs": 4.0, "exact": "2*absz2", "error_tol": 1e-6}


def _write(tmp_path, cfg, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def test_solve_quadratic(tmp_path):
    out = tmp_path / "out"
    assert main(["solve", "--config", _write(tmp_path, SOLVE), "--out", str(out), "--quiet"]) == 0
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["max_error"] <= 1e-6 and diag["viscosity_pass"]
    assert (out / "u.csv").exists() and (out / "u.json").exists()
    summary = (out / "summary.txt").read_text()
    assert config_digest(SOLVE) in summary and "status 0" in summary


def test_density_input_is_converted(tmp_path):
    cfg = dict(SOLVE, rhs={"density": 4.0}, error_tol=None)
    cfg.pop("error_tol")
    out = tmp_path / "out"
    assert main(["solve", "--config", _write(tmp_path, cfg), "--out", str(out), "--quiet"]) in (0, 2)
    assert "kappa(2,2)" in (out / "summary.txt").read_text()


def test_check_reports_violations(tmp_path):
    dom = DomainSpec.ball(2, 1.0, half_width=1.5, h=0.25)
    bad = sample(dom.empty_field(), lambda x1, y1, x2, y2: -(x1**2 + y1**2 + x2**2 + y2**2))
    save_field(bad, tmp_path / "bad.csv")
    cfg = {"command": "check", "kind": "viscosity", "field": "bad.csv", "m": 1}
    out = tmp_path / "out"
    assert main(["check", "--config", _write(tmp_path, cfg), "--out", str(out), "--quiet"]) == 2
    report = json.loads((out / "violations.json").read_text())
    assert not report["pass"] and report["violations"]
    first = report["violations"][0]
    assert first["kind"] == "cone" and first["magnitude"] == pytest.approx(2.0)
    idx = [tuple(v["index"]) for v in report["violations"]]
    assert idx == sorted(idx)


def test_oracle(tmp_path):
    cfg = {"command": "oracle", "n": 2, "m": 1}
    out = tmp_path / "out"
    assert main(["oracle", "--config", _write(tmp_path, cfg), "--out", str(out),
                 "--seed", "7", "--quiet"]) == 0
    data = json.loads((out / "oracle.json").read_text())
    assert data["random_probe_max_deviation"] <= 1e-10
    assert data["kappa"] > 0


@pytest.mark.parametrize("change, field", [
    ({"m": 3}, "m"),
    ({"domain": {"kind": "ball", "h": -1}}, "domain.h"),
    ({"boundary": "x1 ^ 2"}, "boundary"),
    ({"domain": {"kind": "cube", "h": 0.25}}, "domain.kind"),
])
def test_bad_config_names_the_field(tmp_path, change, field):
    out = tmp_path / "out"
    status = main(["solve", "--config", _write(tmp_path, dict(SOLVE, **change)),
                   "--out", str(out), "--quiet"])
    assert status == 4
    assert f"{field}:" in (out / "summary.txt").read_text()


def test_unreadable_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["solve", "--config", str(bad), "--out", str(tmp_path / "o")]) == 4
    assert "invalid JSON" in capsys.readouterr().err


def test_usage_errors_exit_with_config_status(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["frobnicate", "--config", "x", "--out", "y"])
    assert info.value.code == 4
    assert main(["oracle", "--config", _write(tmp_path, {"n": 1, "m": 1}),
                 "--out", str(tmp_path / "o"), "--seed", str(2**64)]) == 4


def test_digest_ignores_key_order():
    a = {"n": 2, "m": 1, "domain": {"h": 0.1, "kind": "ball"}}
    b = {"domain": {"kind": "ball", "h": 0.1}, "m": 1, "n": 2}
    assert config_digest(a) == config_digest(b)
    assert config_digest(a) != config_digest(dict(a, m=2))


def test_repeat_runs_give_identical_outputs(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"out{k}"
        main(["solve", "--config", _write(tmp_path, SOLVE), "--out", str(out), "--quiet"])
        outs.append((out / "u.csv").read_bytes())
    assert outs[0] == outs[1]


def test_module_entry_point(tmp_path):
    cfg = _write(tmp_path, {"command": "oracle", "n": 3, "m": 3})
    proc = subprocess.run([sys.executable, "-m", "hessianlab.cli", "oracle", "--config", cfg,
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "kappa(3,3) = 1" in proc.stdout
