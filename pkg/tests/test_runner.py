from __future__ import annotations

import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sigma2lab.levelset.fields import CorruptedHessianField, sphere_field
from sigma2lab.runner.cli import EXIT_FAILED, EXIT_OK, EXIT_USAGE, main
from sigma2lab.runner.config import (KINDS, ConfigError, GridOptions, IsoperimetryOptions, LevelsetOptions,
                                     Scenario, SequenceOptions)
from sigma2lab.runner.scenarios import ScheduleError, run, schedule, verify_field

finite = st.floats(-0.99, 0.0, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(
    kind=st.sampled_from(KINDS),
    betas=st.lists(finite, min_size=1, max_size=4).map(tuple),
    seed=st.integers(0, 2**31),
    grid=st.builds(GridOptions, st.integers(16, 128), st.floats(1.0, 10.0), st.integers(3, 500)),
    level=st.builds(LevelsetOptions, st.sampled_from(["sphere", "football", "perturbed", "file"]),
                    st.sampled_from(["grid", "analytic"]), st.text(max_size=12), st.integers(0, 19)),
    seq=st.builds(SequenceOptions, st.floats(-0.5, -1e-3), st.integers(2, 50), st.integers(1, 3),
                  st.sampled_from(["harmonic", "constant"])),
    iso=st.builds(IsoperimetryOptions, st.lists(st.floats(1e-3, 0.5), min_size=1, max_size=4).map(tuple),
                  st.integers(10, 22), st.integers(0, 60)),
)
def test_config_roundtrip(kind, betas, seed, grid, level, seq, iso):
    s = Scenario(kind, betas, seed, "out", grid, level, seq, iso)
    assert Scenario.loads(s.dumps()) == s


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        Scenario.loads('kind = "classify"\nfoo = 1\n')
    with pytest.raises(ConfigError):
        Scenario.loads('kind = "classify"\n[grid]\nfoo = 1\n')
    with pytest.raises(ConfigError):
        Scenario.loads('kind = "nope"\n')
    with pytest.raises(ConfigError):
        Scenario.loads("kind = ")


def test_schedule_must_converge(tmp_path):
    s = Scenario("boundary-sequence", out_dir=str(tmp_path))
    assert schedule(s)[-1] == pytest.approx(-0.1 / 20)
    with pytest.raises(ScheduleError):
        schedule(s.updated(sequence__schedule="constant"))
    with pytest.raises(ScheduleError):
        schedule(s.updated(sequence__eps0=0.1))


def test_cli_exit_codes(tmp_path, capsys):
    out = str(tmp_path)
    assert main(["classify", "--betas=-0.5,-0.9", "--out-dir", out]) == EXIT_OK
    assert json.loads((tmp_path / "classify.json").read_text())["class"] == "supercritical"
    assert main(["classify", "--betas=-1.5", "--out-dir", out]) == EXIT_USAGE
    assert main(["boundary-sequence", "--schedule", "constant", "--out-dir", out]) == EXIT_USAGE
    assert main(["boundary-sequence", "--index", "3", "--out-dir", out]) == EXIT_FAILED
    assert main(["levelset-verify", "--field-file", str(tmp_path / "missing.npz"), "--out-dir", out]) == EXIT_USAGE
    assert main(["nope"]) == EXIT_USAGE
    printed = capsys.readouterr().out
    assert "FAIL  index 3 is the boundary index" in printed


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "s.toml"
    Scenario("football", betas=(-0.3, -0.3), out_dir=str(tmp_path / "a")).save(cfg)
    assert main(["football", "--config", str(cfg)]) == EXIT_OK
    rep = json.loads((tmp_path / "a" / "football.json").read_text())
    assert rep["beta"] == -0.3
    assert main(["football", "--config", str(cfg), "--betas=-0.5,-0.5", "--out-dir", str(tmp_path / "b")]) == EXIT_OK
    assert json.loads((tmp_path / "b" / "football.json").read_text())["beta"] == -0.5
    assert Scenario.load(tmp_path / "b" / "scenario.toml").betas == (-0.5, -0.5)
    assert main(["classify", "--config", str(cfg)]) == EXIT_USAGE


def test_outputs_are_byte_identical(tmp_path):
    for d in ("x", "y"):
        assert main(["boundary-sequence", "--out-dir", str(tmp_path / d)]) == EXIT_OK
        assert main(["football", "--out-dir", str(tmp_path / d)]) == EXIT_OK
    for name in ("sequence.csv", "sequence.json", "sequence.svg", "football.json", "football_profile.csv",
                 "football.svg"):
        assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes(), name


def test_boundary_sequence_report(tmp_path):
    res = run(Scenario("boundary-sequence", out_dir=str(tmp_path)))
    assert res.passed
    r = res.report
    assert r["limit"]["capacity"] == pytest.approx(7 / 64)
    assert r["limit"]["mass"] == pytest.approx(9 / 64)
    assert r["limit_conditions"] == {"round_sphere_limit": False, "cone_sum_positive": True}
    assert abs(r["gaps"][0] + 0.0094) < 1e-4


def test_levelset_verify_analytic(tmp_path):
    s = Scenario("levelset-verify", betas=(-0.5, -0.5), out_dir=str(tmp_path),
                 levelset=LevelsetOptions(source="football", path="analytic"))
    res = run(s)
    assert res.passed
    assert res.report["capacity"]["K"] == pytest.approx(7 / 64, abs=1e-10)
    header = (tmp_path / "levelset.csv").read_text().splitlines()[0]
    assert header.startswith("t,A,B,C,z,D,M,E,F1,F2,dCdA,residual_")


def test_fault_injection_fails_verification(tmp_path):
    s = Scenario("levelset-verify", out_dir=str(tmp_path), grid=GridOptions(48, 6.0, 201))
    res = verify_field(CorruptedHessianField(sphere_field(), 0.05), s, tmp_path)
    assert not res.passed
    failed = [k for k, ok in res.verdicts.items() if not ok]
    assert len(failed) == 1 and failed[0].startswith("z3")


SCENARIO_DIR = Path(__file__).resolve().parents[1] / "scenarios"


@pytest.mark.parametrize("path", sorted(SCENARIO_DIR.glob("*.toml")), ids=lambda p: p.stem)
def test_shipped_scenarios_parse(path):
    s = Scenario.load(path)
    assert Scenario.loads(s.dumps()) == s


@pytest.mark.parametrize("name", ["classify", "football", "boundary-sequence"])
def test_shipped_scenarios_run(name, tmp_path, capsys):
    argv = [name, "--config", str(SCENARIO_DIR / f"{name}.toml"), "--out-dir", str(tmp_path)]
    assert main(argv) == EXIT_OK
