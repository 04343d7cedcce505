from __future__ import annotations

import csv
import os

import pytest

from swarm_hierarchy import harness as H
from swarm_hierarchy.coeffs import ModelParams, temp_crit
from swarm_hierarchy.errors import ParameterError, RegimeError

SWEEP_PARAMS = ModelParams(a=1.0, tau=1.0, sigma=0.05, radius=0.49, dim=2)


def _small_sweep(seeds=(0,)) -> H.ScenarioConfig:
    return H.ScenarioConfig("phase-sweep", SWEEP_PARAMS, sweep_name="temp_over_tc", sweep_values=(0.5, 1.5),
                            n_particles=1024, t_end=1.0, seeds=seeds, options={"burn_in": 0.5})


def _read_csv(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_config_hash_stable_and_sensitive():
    a, b = _small_sweep(), _small_sweep()
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != _small_sweep(seeds=(1,)).config_hash()
    b.out_dir = "/elsewhere"
    assert a.config_hash() == b.config_hash()


def test_empty_report_writes_header_only_csvs(tmp_path):
    rep = H.RunReport("empty", "0" * 16)
    paths = H.emit_outputs(rep, str(tmp_path))
    for suffix in ("_runs.csv", "_summary.csv", "_criteria.csv"):
        path = str(tmp_path / f"empty{suffix}")
        assert path in paths
        with open(path) as fh:
            lines = fh.read().splitlines()
        assert len(lines) == 1
    assert rep.exit_code == 0
    with open(tmp_path / "empty_summary.txt") as fh:
        text = fh.read()
    assert "passed=true" in text and "failed=\n" in text


def test_failed_criterion_sets_exit_code_and_is_named(tmp_path):
    rep = H.RunReport("demo", "0" * 16)
    rep.check("fine", True, 0.0, 1.0, "TRIVIAL")
    rep.check("broken_thing", False, 2.0, 1.0, "DERIVED")
    assert not rep.passed and rep.exit_code == 1
    H.emit_outputs(rep, str(tmp_path))
    with open(tmp_path / "demo_summary.txt") as fh:
        text = fh.read()
    assert "passed=false" in text and "failed=broken_thing\n" in text
    rows = {r["criterion"]: r for r in _read_csv(str(tmp_path / "demo_criteria.csv"))}
    assert rows["broken_thing"]["passed"] == "false" and rows["fine"]["passed"] == "true"


def test_volatile_values_kept_out_of_criteria_csv(tmp_path):
    rep = H.RunReport("demo", "0" * 16)
    c = rep.check("runtime", True, 1.2345, 10.0, "TRIVIAL")
    c.volatile = True
    rep.metrics["runtime_s"] = 1.2345
    paths = H.emit_outputs(rep, str(tmp_path))
    row = _read_csv(str(tmp_path / "demo_criteria.csv"))[0]
    assert row["value"] == ""
    assert str(tmp_path / "demo_timing.txt") in paths
    with open(tmp_path / "demo_summary.txt") as fh:
        assert "runtime" not in fh.read()


def test_unwritable_output_dir(tmp_path):
    target = tmp_path / "file"
    target.write_text("x")
    with pytest.raises(ParameterError):
        H.emit_outputs(H.RunReport("x", "0"), str(target / "sub"))


def test_phase_sweep_csv_contract(tmp_path):
    rep = H.run_scenario(_small_sweep())
    H.emit_outputs(rep, str(tmp_path))
    runs = _read_csv(str(tmp_path / "phase-sweep_runs.csv"))
    assert [float(r["temp_over_tc"]) for r in runs] == [0.5, 1.5]
    tc = temp_crit(1.0, 2)
    for r in runs:
        assert r["config_hash"] == rep.config_hash
        assert float(r["temp"]) == pytest.approx(float(r["temp_over_tc"]) * tc, rel=1e-14)
        assert 0.0 <= float(r["phi"]) <= 1.0
        assert r["equilibrated"] in ("true", "false")
    summ = _read_csv(str(tmp_path / "phase-sweep_summary.csv"))
    assert list(summ[0]) == ["config_hash", "temp", "temp_over_tc", "phi_mean", "phi_std"]
    with open(tmp_path / "phase-sweep_phi_curve.dat") as fh:
        assert fh.readline().strip() == "# temp phi_mean"
        assert len(fh.read().splitlines()) == 2


def test_outputs_reproducible_up_to_version_line(tmp_path):
    outs = []
    for k, version in enumerate(("1.0", "2.0")):
        rep = H.run_scenario(_small_sweep(seeds=(0, 1)))
        rep.code_version = version
        d = tmp_path / str(k)
        outs.append(sorted(os.path.basename(p) for p in H.emit_outputs(rep, str(d))))
    assert outs[0] == outs[1]
    for name in outs[0]:
        a = (tmp_path / "0" / name).read_text().splitlines()
        b = (tmp_path / "1" / name).read_text().splitlines()
        if name.endswith("_summary.txt"):
            assert a[0] != b[0] and a[0].startswith("version=")
            a, b = a[1:], b[1:]
        assert a == b


def test_phase_sweep_guards():
    with pytest.raises(ParameterError):
        H.run_scenario(H.ScenarioConfig("phase-sweep", SWEEP_PARAMS, sweep_values=(0.1,), n_particles=512))
    with pytest.raises(ParameterError):
        H.run_scenario(H.ScenarioConfig("phase-sweep", SWEEP_PARAMS, sweep_name="speed", sweep_values=(0.1,)))
    with pytest.raises(ParameterError):
        H.run_scenario(H.ScenarioConfig("phase-sweep", SWEEP_PARAMS, sweep_values=(0.0, 0.1)))


def test_unknown_scenario():
    with pytest.raises(ParameterError, match="unknown scenario"):
        H.run_scenario(H.ScenarioConfig("criterion-42"))


def test_soh_branch_refuses_hot_state():
    p = ModelParams.from_temperature(0.5, a=1.0, sigma=1.0, dim=2)
    with pytest.raises(RegimeError):
        H.run_scenario(H.ScenarioConfig("limit-tau", p, sweep_values=(1e-2,), options={"branch": "soh"}))


def test_diffusion_branch_refuses_cold_state():
    p = ModelParams.from_temperature(0.2, a=1.0, sigma=1.0, dim=2)
    with pytest.raises(RegimeError):
        H.run_scenario(H.ScenarioConfig("limit-tau", p, sweep_values=(1e-2,), options={"branch": "diffusion"}))


def test_particle_speed_refuses_hot_state():
    p = ModelParams.from_temperature(0.5, a=1.0, sigma=1.0, dim=2)
    with pytest.raises(RegimeError):
        H.run_scenario(H.ScenarioConfig("particle-speed", p))


@pytest.mark.parametrize("alpha", [0.2, 0.25, -0.01])
def test_alpha_study_rejects_out_of_range(alpha):
    p = ModelParams.from_temperature(0.2, a=1.0, sigma=1.0, dim=2)
    with pytest.raises(ParameterError):
        H.run_scenario(H.ScenarioConfig("limit-alpha", p, sweep_values=(1e-2,), options={"alpha": alpha}))


def test_merge_prefixes_everything():
    a = H.RunReport("a", "h")
    b = H.RunReport("b", "h")
    b.rows.append({"x": 1})
    b.check("c", True, 0.0, 1.0)
    b.metrics["m"] = 2.0
    b.series["s"] = (["x"], [[1]])
    a.merge(b, "p_")
    assert a.rows == [{"part": "p_", "x": 1}]
    assert a.criterion("p_c").passed
    assert a.metrics == {"p_m": 2.0} and "p_s" in a.series
    with pytest.raises(KeyError):
        a.criterion("c")
