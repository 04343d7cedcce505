from __future__ import annotations

import csv

import numpy as np
import pytest

from swarm_hierarchy import __version__
from swarm_hierarchy.cli import main

COLD = "[params]\ntemp = 0.2\ndim = 2\n[run]\ncells = 64\nt_end = 0.05\nn = 1024\nn_v = 24\n"
HOT = "[params]\ntemp = 0.5\ndim = 1\n[run]\ncells = 64\nt_end = 0.001\n"


@pytest.fixture
def run(tmp_path):
    def _run(cfg_text: str, *argv: str) -> int:
        cfg = tmp_path / "run.cfg"
        cfg.write_text(cfg_text)
        return main(["--config", str(cfg), "--out", str(tmp_path / "out"), *argv])
    return _run


def _rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_coeffs_table(run, tmp_path, capsys):
    assert run(COLD, "coeffs") == 0
    rows = {r["name"]: r for r in _rows(tmp_path / "out" / "coefficients.csv")}
    assert float(rows["temp_crit"]["value"]) == pytest.approx(0.25, rel=1e-15)
    assert "temp_crit" in capsys.readouterr().out


def test_coeffs_rejects_alpha_at_boundary(run, capsys):
    assert run(COLD, "coeffs", "--alpha", "0.2") == 2
    assert capsys.readouterr().err.startswith("error:")


@pytest.mark.parametrize("argv,produced", [
    (("particles", "--t-end", "0.2"), "particles_observables.csv"),
    (("kinetic-hom",), "kinetic_record.csv"),
    (("verify-closure",), "closure_checks.csv"),
    (("euler",), "euler_history.csv"),
    (("ns",), "ns_history.csv"),
    (("soh",), "soh_0000.csv"),
])
def test_subcommands_write_outputs(run, tmp_path, argv, produced):
    assert run(COLD, *argv) == 0
    assert (tmp_path / "out" / produced).is_file()


def test_euler_history_conserves_mass(run, tmp_path):
    assert run(COLD, "euler") == 0
    mass = np.array([float(r["mass"]) for r in _rows(tmp_path / "out" / "euler_history.csv")])
    assert np.max(np.abs(mass / mass[0] - 1)) < 1e-13


def test_diffusion_runs_hot_and_refuses_cold(run, tmp_path, capsys):
    assert run(HOT, "diffusion") == 0
    assert "D = 1" in capsys.readouterr().out
    assert run(COLD, "diffusion") == 2
    assert "T_c" in capsys.readouterr().err


def test_soh_refuses_hot_state(run, capsys):
    assert run(HOT, "soh") == 2
    assert "T_c" in capsys.readouterr().err


def test_unknown_section_exits_2(run, capsys):
    assert run("[nonsense]\nx = 1\n", "coeffs") == 2
    assert "nonsense" in capsys.readouterr().err


def test_validate_single_criterion(run, tmp_path, capsys):
    assert run("", "validate", "1") == 0
    out = capsys.readouterr().out
    assert "PASS criterion-1:" in out and "FAIL" not in out
    assert (tmp_path / "out" / "criterion-1_criteria.csv").is_file()


def test_sweep_from_config(run, tmp_path):
    cfg = ("[params]\na = 1\ntau = 1\nsigma = 0.05\nradius = 0.49\ndim = 2\n"
           "[run]\nn_particles = 1024\nt_end = 1.0\nseeds = 0\n"
           "[sweep]\nname = temp_over_tc\nvalues = 0.5, 1.5\n[options]\nburn_in = 0.5\n")
    assert run(cfg, "sweep") == 0
    rows = _rows(tmp_path / "out" / "phase-sweep_runs.csv")
    assert [float(r["temp_over_tc"]) for r in rows] == [0.5, 1.5]


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("SWARM_HIERARCHY_OUT", str(tmp_path / "env"))
    assert main(["coeffs"]) == 0
    assert (tmp_path / "env" / "coefficients.csv").is_file()


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.strip() == __version__
