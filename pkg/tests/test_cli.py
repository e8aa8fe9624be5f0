import csv
import json
import math

import pytest

from chargedrop import __version__
from chargedrop.cli import main


def _run(tmp_path, *args):
    out = tmp_path / "out"
    code = main(["--out", str(out), *args])
    man = out / "manifest.json"
    return code, (json.loads(man.read_text()) if man.exists() else None), out


def _rows(out):
    with open(out / "results.csv") as fh:
        lines = fh.read().splitlines()
    return lines[0], list(csv.DictReader(lines[1:]))


def test_capacity_of_unit_sphere(tmp_path):
    code, man, out = _run(tmp_path, "--command", "capacity", "--nodes", "1000")
    assert code == 0 and man["status"] == "ok"
    assert man["results"]["capacity"] == pytest.approx(1.0, rel=0.01)
    stamp, rows = _rows(out)
    assert stamp.startswith(f"# chargedrop {__version__} command=capacity")
    assert float(rows[0]["capacity"]) == man["results"]["capacity"]
    assert man["tolerances"] == {"tol": 1e-6, "max_iter": 50_000}


def test_config_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("command = capacity\nnodes = 300\ntol = 1e-7\nradius = 2\n")
    code, man, _ = _run(tmp_path, "--config", str(cfg), "--nodes", "400")
    assert code == 0
    assert man["config"]["nodes"] == 400
    assert man["config"]["tol"] == 1e-7
    assert man["results"]["capacity"] == pytest.approx(2.0, rel=0.01)


def test_unknown_config_key_is_named(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("command = capacity\nnodez = 300\n")
    assert main(["--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "nodez" in capsys.readouterr().err


def test_config_errors_exit_2(tmp_path):
    assert main(["--out", str(tmp_path)]) == 2
    assert main(["--command", "capacity", "--nodes", "many", "--out", str(tmp_path)]) == 2
    assert main(["--config", str(tmp_path / "missing.cfg")]) == 2


def test_convergence_failure_exits_3(tmp_path):
    code, man, _ = _run(
        tmp_path, "--command", "capacity", "--shape", "cube", "--nodes", "600", "--tol", "1e-14", "--max-iter", "2"
    )
    assert code == 3
    assert man["status"] == "convergence"
    assert man["results"]["residual"] > 1e-14


def test_contract_violation_exits_4(tmp_path):
    code, man, _ = _run(tmp_path, "--command", "nonexistence", "--beta", "2.0")
    assert code == 4 and man["status"] == "contract" and "beta" in man["error"]
    code, _, _ = _run(tmp_path, "--command", "stability", "--dim", "2")
    assert code == 4


def test_stability_without_charge_ball_always_wins(tmp_path):
    code, man, out = _run(
        tmp_path, "--command", "stability", "--charge", "0", "--nodes", "300",
        "--modes", "2,0; 3,0", "--amplitudes", "0.02",
    )
    assert code == 0
    assert man["results"]["ball_wins"] == {"0.0": True}
    assert man["results"]["empirical_threshold"] == 0.0
    _, rows = _rows(out)
    assert len(rows) == 2 and all(r["verdict_ball_wins"] == "True" for r in rows)


def test_nonexistence_and_splitting(tmp_path):
    code, man, out = _run(tmp_path, "--command", "nonexistence")
    assert code == 0
    assert man["results"]["isoperimetric_limit"] == pytest.approx(4 * math.pi)
    assert len(_rows(out)[1]) == 7
    code, man, out = _run(tmp_path, "--command", "splitting")
    assert code == 0
    assert man["results"]["threshold"] == pytest.approx(136.79, abs=0.01)
    rows = _rows(out)[1]
    assert [r["verdict_split_below_bound"] for r in rows] == ["False", "True"]


def test_equilibrium_and_functional_outputs(tmp_path):
    code, man, out = _run(
        tmp_path, "--command", "equilibrium", "--dim", "2", "--alpha", "log", "--radius", "0.5", "--nodes", "200"
    )
    assert code == 0
    assert man["results"]["energy"] == pytest.approx(math.log(2), abs=1e-4)
    assert len(_rows(out)[1]) == 200
    code, man, out = _run(tmp_path, "--command", "functional", "--charge", "0,1", "--alpha", "0.5", "--nodes", "300")
    assert code == 0
    kinds = [r["kind"] for r in _rows(out)[1]]
    assert kinds == ["F", "G", "F", "G"]
