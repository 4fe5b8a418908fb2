import subprocess
import sys

import pytest

from chsep.cli import main
from chsep.experiments import ExperimentConfig, preset


def test_preset_emit(tmp_path, capsys):
    assert main(["preset", "oono"]) == 0
    out = capsys.readouterr().out
    assert ExperimentConfig.from_text(out).to_text() == preset("oono").to_text()
    path = tmp_path / "o.ini"
    assert main(["preset", "spinodal", "--emit", str(path)]) == 0
    assert ExperimentConfig.load(path).values == preset("spinodal").values
    assert main(["preset", "nope"]) == 2


def small_config(tmp_path, name="oono", **solver):
    exp = preset(name).updated("grid", nx=16, ny=16).updated("solver", **solver)
    path = tmp_path / f"{name}.ini"
    path.write_text(exp.to_text())
    return str(path)


def test_run_verify(tmp_path, capsys):
    cfg = small_config(tmp_path, t_end=0.05)
    out = tmp_path / "run"
    assert main(["run", cfg, "--out", str(out)]) == 0
    assert main(["verify", str(out)]) == 0
    assert "PASS mass_identity" in capsys.readouterr().out


def test_ineq(tmp_path, capsys):
    cfg = small_config(tmp_path)
    assert main(["ineq", cfg]) == 0
    assert main(["ineq", cfg, "--self-test"]) == 0
    assert "violations=0" in capsys.readouterr().out


def test_sweep_and_cdep(tmp_path):
    cfg = small_config(tmp_path, t_end=0.2)
    assert main(["sweep-lambda", cfg, "--out", str(tmp_path / "s.csv")]) == 0
    assert (tmp_path / "s.csv").read_text().startswith("lambda_j,lambda_j1,distance\n")
    assert main(["cdep", cfg, "--out", str(tmp_path / "c.csv")]) == 0
    assert main(["sweep-lambda", cfg, "--min-slope", "5"]) == 1


def test_bad_config(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[grid]\nbogus = 1\n")
    assert main(["run", str(path), "--out", str(tmp_path / "x")]) == 2


def test_console_script(tmp_path):
    res = subprocess.run([sys.executable, "-m", "chsep.cli", "preset", "tumor_local"],
                         capture_output=True, text=True, check=True)
    assert "[tumor]" in res.stdout and "enabled = true" in res.stdout
