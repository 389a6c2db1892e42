import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rough_hj.cli_io import (
    EXIT_ERROR,
    EXIT_FAIL,
    EXIT_PASS,
    ConfigError,
    RunManifest,
    main,
    parse_config,
    read_csv,
    verify_manifest,
    write_csv,
)


def test_flags_override_file_values():
    cfg = parse_config("rate-sweep", "epsilon_list = 2^-3, 2^-4\nbeta = 0.5\nseed = 7\n",
                       ["--beta", "0.3333", "--seed", "42"])
    assert cfg.params["beta"] == pytest.approx(0.3333)
    assert cfg.seed == 42
    assert cfg.params["epsilon_list"] == [0.125, 0.0625]


def test_missing_required_key_is_named():
    with pytest.raises(ConfigError) as err:
        parse_config("rate-sweep", "beta = 0.3\n")
    assert err.value.key == "epsilon_list"


def test_unknown_and_mistyped_keys_are_named():
    with pytest.raises(ConfigError) as err:
        parse_config("blowup", "colour = red\n")
    assert err.value.key == "colour"
    with pytest.raises(ConfigError) as err:
        parse_config("blowup", "theta = half\n")
    assert err.value.key == "theta"


def test_defaults_are_recorded():
    cfg = parse_config("blowup", "")
    assert "theta" in cfg.defaults_used
    assert cfg.params["epsilon_list"] == [2.0**-k for k in range(4, 9)]


def test_flag_names_use_dashes():
    cfg = parse_config("donsker", "", ["--ks-threshold", "0.1"])
    assert cfg.params["ks_threshold"] == pytest.approx(0.1)


def test_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("ROUGH_HJ_OUTPUT", str(tmp_path))
    assert parse_config("paths", "").out == tmp_path / "paths"


columns = st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=20)


@given(columns)
def test_csv_round_trip_is_exact(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("csv") / "a.csv"
    a = np.array(values)
    write_csv(path, ["a", "b"], [a, -a])
    header, data = read_csv(path)
    assert header == ["a", "b"]
    assert np.array_equal(data[:, 0], a) and np.array_equal(data[:, 1], -a)
    assert b"\r" not in path.read_bytes()


def test_effective_without_potential_exits_zero(tmp_path):
    out = tmp_path / "eff"
    code = main(["effective", "--amplitude", "0", "--p-points", "9", "--cell-n", "64", "--out", str(out)])
    assert code == EXIT_PASS
    header, data = read_csv(out / "effective.csv")
    np.testing.assert_allclose(data[:, 1], data[:, 0] ** 2, atol=1e-6)
    assert verify_manifest(out) == []


def test_consistency_reports_gap_and_exits_zero(tmp_path):
    out = tmp_path / "cons"
    code = main(["consistency", "--lty-s", "0.2", "--p-points", "9", "--p-min", "-2", "--cell-n", "64",
                 "--cell-tol", "1e-6", "--out", str(out)])
    assert code == EXIT_PASS
    summary = json.loads((out / "summary.json").read_text())
    assert summary["exceeds"] and summary["max_gap"] > 1e-2


def test_failing_rate_sweep_exits_two(tmp_path):
    # coarse eps values and tiny grids: the final error stays above half the first
    out = tmp_path / "rate"
    code = main(["rate-sweep", "--epsilon-list", "2^-2,2^-3,2^-4", "--p-points", "65", "--cell-n", "32",
                 "--n-cell", "16", "--n-hom", "64", "--out", str(out)])
    assert code == EXIT_FAIL
    assert RunManifest.read(out).status == "fail"


def test_error_exits_one(tmp_path):
    assert main(["blowup", "--sigma", "5", "--out", str(tmp_path / "b")]) == EXIT_ERROR
    assert main(["blowup", "--bogus", "1", "--out", str(tmp_path / "b")]) == EXIT_ERROR


def test_verify_detects_tampering(tmp_path):
    out = tmp_path / "paths"
    assert main(["paths", "--family", "TakagiLike", "--depth", "6", "--out", str(out)]) == EXIT_PASS
    assert main(["verify", "--dir", str(out)]) == EXIT_PASS
    target = next(p for p in out.glob("*.csv"))
    target.write_text(target.read_text() + "0,0\n")
    assert verify_manifest(out) == [target.name]
    assert main(["verify", "--dir", str(out)]) == EXIT_FAIL


def test_same_config_gives_identical_csv(tmp_path):
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main(["paths", "--family", "RandomWalkPair", "--eta", "2^-5", "--seed", "3", "--out", str(out)]) == 0
    names = sorted(p.name for p in outs[0].glob("*.csv"))
    assert names
    for name in names:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    # and a different seed changes them
    assert main(["paths", "--family", "RandomWalkPair", "--eta", "2^-5", "--seed", "4", "--out",
                 str(tmp_path / "c")]) == 0
    assert any((outs[0] / n).read_bytes() != (tmp_path / "c" / n).read_bytes() for n in names)


def test_solve_and_distance_runs(tmp_path):
    assert main(["solve", "--eps", "0.25", "--n", "64", "--checkpoints", "0.5,1", "--out", str(tmp_path / "s")]) == 0
    assert len(list((tmp_path / "s" / "solution").glob("checkpoint_*.csv"))) == 2
    assert main(["solve", "--eps", "0.25", "--n", "64", "--flux", "LaxFriedrichs", "--out", str(tmp_path / "lf")]) == 0
    assert main(["solve", "--eps", "0.25", "--flux", "Upwind", "--out", str(tmp_path / "x")]) == EXIT_ERROR
    assert main(["distance", "--y-list", "0.5", "--n-steps", "64", "--restarts", "1",
                 "--out", str(tmp_path / "d")]) == 0


def test_module_entry_point(tmp_path):
    env = {**os.environ, "ROUGH_HJ_OUTPUT": str(tmp_path)}
    proc = subprocess.run([sys.executable, "-m", "rough_hj", "blowup", "--epsilon-list", "2^-4,2^-5"],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "blowup" / "manifest.json").exists()
