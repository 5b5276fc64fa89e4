import io
import json
import math

import numpy as np
import pytest

from acqgame.cli import decode, encode, load_config, main, resolve, build_parser, run
from acqgame.equilibrium import NU_BOUND_SILENCE
from acqgame.model import ParameterError
from acqgame.montecarlo import SEED_ENV

GAME = ["--beta-i", "1", "--beta-j", "1", "--nu", "0.5", "--horizon", "2"]


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    status = run(list(argv), out, err)
    return status, out.getvalue(), err.getvalue()


def call_json(*argv):
    status, out, err = call(*argv, "--format", "json")
    assert status in (0, 2), err
    return status, json.loads(out)


def test_solve_one_lock_example():
    _, data = call_json("solve", "--locks", "1", *GAME)
    assert data["equilibrium"]["thresholds"] == pytest.approx([math.log(2)] * 2, abs=1e-6)


def test_solve_two_lock_silence_example():
    _, data = call_json("solve", "--locks", "2", "--beta-i", "1", "--beta-j", "1", "--nu", "0.6", "--horizon", "3")
    eq = data["equilibrium"]
    assert eq["thresholds"] == [0.0, 0.0] and eq["regime"] == NU_BOUND_SILENCE


def test_verify_hjb_silent_example():
    status, data = call_json("verify-hjb", "--case", "silent", "--c", "1", "--nu", "0.5", "--beta", "1", "--U", "1")
    assert status == 0 and data["passed"]
    assert data["report"]["max_residual"] < 1e-10 and data["report"]["boundary_error"] < 1e-12


def test_verify_hjb_wrong_t1_is_validation_error():
    status, _, err = call("verify-hjb", *GAME, "--psi-j", "1.5", "--t1", "1.0")
    assert status == 1 and "case 1" in err


def test_human_and_csv_formats():
    status, out, _ = call("solve", *GAME)
    assert status == 0 and "equilibrium.thresholds.0: 0.693147181" in out
    status, out, _ = call("solve", *GAME, "--format", "csv")
    header, row = out.splitlines()
    assert "equilibrium.thresholds.0" in header.split(",")
    assert "0.693147181" in row.split(",")


# -- config -----------------------------------------------------------------


def write(tmp_path, obj, name="cfg.json"):
    path = tmp_path / name
    path.write_text(obj if isinstance(obj, str) else json.dumps(obj), encoding="utf-8")
    return str(path)


def test_config_defaults(tmp_path, monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)
    path = write(tmp_path, {"beta_i": 1, "beta_j": 1, "nu": 0.5, "horizon": 2, "locks": 1})
    cfg = resolve(build_parser().parse_args(["solve", "--config", path]))
    assert (cfg.reps, cfg.seed, cfg.n_segments, cfg.grid_h, cfg.format) == (10**6, 42, 40, 1e-3, "human")
    assert cfg.params.nu == 0.5


def test_config_invalid_nu(tmp_path):
    path = write(tmp_path, {"beta_i": 1, "beta_j": 1, "nu": -0.1, "horizon": 2})
    with pytest.raises(ParameterError, match="nu must be positive"):
        resolve(build_parser().parse_args(["solve", "--config", path])).params
    status, _, err = call("solve", "--config", path)
    assert status == 1 and "nu must be positive" in err


def test_flag_overrides_config(tmp_path):
    path = write(tmp_path, {"beta_i": 1, "beta_j": 1, "nu": 0.5, "horizon": 2})
    cfg = resolve(build_parser().parse_args(["solve", "--config", path, "--nu", "0.3"]))
    assert cfg.params.nu == 0.3


def test_env_seed_below_config(tmp_path, monkeypatch):
    monkeypatch.setenv(SEED_ENV, "9")
    assert resolve(build_parser().parse_args(["solve"])).seed == 9
    path = write(tmp_path, {"seed": 5})
    assert resolve(build_parser().parse_args(["solve", "--config", path])).seed == 5


def test_config_errors_cite_location(tmp_path):
    bad = write(tmp_path, '{\n  "nu": 0.5,\n  "beta_i" 1\n}')
    with pytest.raises(Exception, match="line 3"):
        load_config(bad)
    unknown = write(tmp_path, {"nu": 0.5, "gamma": 1}, "u.json")
    status, _, err = call("solve", "--config", unknown)
    assert status == 1 and "gamma" in err


def test_usage_errors_exit_one():
    assert call("solve")[0] == 1
    assert call("frobnicate")[0] == 1
    assert call("br", *GAME)[0] == 1
    assert main(["solve", *GAME, "--locks", "3"]) == 1


# -- round trip -------------------------------------------------------------

ROUND_TRIP = {
    "solve": ["solve", *GAME],
    "solve_two_lock": ["solve", *GAME, "--locks", "2", "--nu", "0.25", "--horizon", "3"],
    "solve_n": ["solve", *GAME, "--n-agents", "3"],
    "br": ["br", *GAME, "--psi-j", "1.0"],
    "br_grid": ["br", *GAME, "--psi-j", "1.0", "--grid", "--n-segments", "20"],
    "br_two_lock_grid": ["br", *GAME, "--locks", "2", "--nu", "0.25", "--psi-j", "0.9", "--grid", "--n-segments", "20"],
    "eval": ["eval", *GAME, "--locks", "2", "--nu", "0.25", "--horizon", "3"],
    "simulate": ["simulate", *GAME, "--reps", "2000"],
    "verify_hjb": ["verify-hjb", *GAME, "--psi-j", "1.0", "--grid-h", "0.01"],
    "sweep": ["sweep", *GAME, "--values", "0.2", "0.4"],
    "certify": ["certify", *GAME, "--reps", "2000", "--n-segments", "20"],
    "certify_n": ["certify", *GAME, "--n-agents", "3", "--reps", "2000"],
}


@pytest.mark.parametrize("name", sorted(ROUND_TRIP))
def test_json_round_trip(name):
    _, data = call_json(*ROUND_TRIP[name])
    again = json.loads(json.dumps(encode(decode(data))))
    assert again == data


def test_simulate_is_deterministic():
    a = call("simulate", *GAME, "--reps", "5000", "--seed", "7", "--format", "json")[1]
    b = call("simulate", *GAME, "--reps", "5000", "--seed", "7", "--format", "json")[1]
    c = call("simulate", *GAME, "--reps", "5000", "--seed", "8", "--format", "json")[1]
    assert a == b and a != c


# -- sweep ------------------------------------------------------------------


def test_sweep_theta_monotone():
    status, out, _ = call("sweep", *GAME, "--param", "nu", "--start", "0.05", "--stop", "0.95", "--num", "19", "--format", "csv")
    lines = out.splitlines()
    header = lines[0].split(",")
    assert header[0] == "nu"
    col = header.index("theta_i")
    theta = [float(line.split(",")[col]) for line in lines[1:]]
    assert len(theta) == 19 and status == 0
    assert all(a >= b for a, b in zip(theta, theta[1:]))
    assert theta[0] == 2.0


def test_sweep_other_command():
    _, data = call_json("sweep", *GAME, "--param", "psi_j", "--values", "0.2", "1.5", "--command", "br")
    assert [r["psi"] for r in data["rows"]] == pytest.approx([2.0, math.log(2)])


# -- exit status ------------------------------------------------------------


def test_certify_exit_codes():
    status, data = call_json("certify", *GAME, "--reps", "20000", "--n-segments", "40")
    assert status == 0 and data["verdict"] == "certified"
    status, out, err = call("certify", "--beta-i", "0.8", "--beta-j", "1", "--nu", "0.2", "--horizon", "3",
                            "--locks", "2", "--reps", "20000", "--n-segments", "80", "--format", "json")
    assert status == 2 and json.loads(out)["verdict"] == "failed"


def test_out_file(tmp_path):
    target = tmp_path / "r.json"
    status, out, _ = call("solve", *GAME, "--format", "json", "--out", str(target))
    assert status == 0 and out == ""
    assert json.loads(target.read_text())["command"] == "solve"
