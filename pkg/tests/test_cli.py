import json

import numpy as np
import pytest

from polyslab import cli, solver
from polyslab.config import ConfigError, parse_config, parse_text, schema_text
from polyslab.phase_space import load_field

SMALL = """\
n_x = 5
n_v = 8
n_I = 4
n_samples = 32
"""


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(SMALL)
    return path


def write(tmp_path, text, name="c.cfg"):
    path = tmp_path / name
    path.write_text(SMALL + text)
    return path


def test_defaults_fill_a_minimal_config():
    cfg = parse_text("gamma = 0.5\n")
    assert cfg.gamma == 0.5
    assert cfg.epsilon == 0.05
    assert cfg.explicit == {"gamma"}


def test_schema_text_parses_back_to_defaults():
    assert parse_text(schema_text()).values == parse_config().values


@pytest.mark.parametrize("text, fragment", [
    ("a = 2\nleft_T = 1\n", "weight admissibility"),
    ("gama = 0.5\n", "unknown key 'gama'"),
    ("gamma = 0.5\ngamma = 0.6\n", "duplicate key"),
    ("gamma\n", "expected 'key = value'"),
    ("n_x = two\n", "bad value for 'n_x'"),
    ("n_v = 7\n", "even node count"),
    ("eps_list = 0.1, -0.2\n", "eps_list"),
    ("boundary = half_maxwellian\n", "left_beta = right_beta = 0"),
])
def test_config_errors_name_the_field(text, fragment):
    with pytest.raises(ConfigError) as err:
        parse_text(text)
    assert fragment in str(err.value)


def test_all_problems_reported_together():
    with pytest.raises(ConfigError) as err:
        parse_text("gamma = 3\nalpha = -1\nleft_n = -1\n")
    assert len(err.value.problems) == 3


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        parse_config(tmp_path / "nope.cfg")


def test_bad_config_exit_code(tmp_path, capsys):
    assert cli.main(["solve", "--config", str(write(tmp_path, "gama = 1\n")), "--out", str(tmp_path)]) == 2
    assert "gama" in capsys.readouterr().err


def test_empty_eps_list_is_a_config_error(small_cfg, tmp_path):
    assert cli.main(["sweep", "--config", str(small_cfg), "--eps-list", " ", "--out", str(tmp_path)]) == 2


def test_solve_writes_readable_artifacts(small_cfg, tmp_path):
    out = tmp_path / "out"
    assert cli.main(["solve", "--config", str(small_cfg), "--out", str(out)]) == 0
    rep = json.loads((out / "iteration_report.json").read_text())
    assert rep["schema"] == cli.ITERATION_SCHEMA
    assert rep["report"]["converged"]
    assert "wall_time" not in rep["report"]
    nrm = json.loads((out / "norms.json").read_text())
    assert nrm["norms"]["triple"] > 0
    assert nrm["invariance"]["psi_f"]["margin_a1"] >= 0
    rows = cli.read_moments_csv((out / "moments.csv").read_text())
    assert [r["x"] for r in rows] == [0.0, 0.25, 0.5, 0.75, 1.0]
    # evaporation from the hot wall: temperature falls monotonically across the slab
    T = [r["T_tr"] for r in rows]
    assert all(b < a for a, b in zip(T, T[1:]))
    f = load_field(out / "field.bin")
    assert f.values.shape == (5, 8, 8, 8, 4)


def test_seed_override_changes_only_the_seed(small_cfg, tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    cli.main(["solve", "--config", str(small_cfg), "--out", str(out_a), "--seed", "1"])
    cli.main(["solve", "--config", str(small_cfg), "--out", str(out_b), "--seed", "2"])
    a = json.loads((out_a / "iteration_report.json").read_text())
    b = json.loads((out_b / "iteration_report.json").read_text())
    assert a["config"]["seed"] == 1 and b["config"]["seed"] == 2
    assert a["report"]["residuals"] != b["report"]["residuals"]


def test_equilibrium_config_converges_at_once(tmp_path):
    text = ("boundary = half_maxwellian\nleft_beta = 0\nright_beta = 0\nleft_n = 0.2\nright_n = 0.2\n"
            "left_T = 1\nright_T = 1\ninitial = maxwellian\n")
    out = tmp_path / "eq"
    assert cli.main(["solve", "--config", str(write(tmp_path, text)), "--out", str(out)]) == 0
    rep = json.loads((out / "iteration_report.json").read_text())["report"]
    assert rep["iterations"] <= 2
    assert rep["residuals"][-1] <= rep["tol"]


def test_zero_boundary_gives_zero_field(tmp_path):
    out = tmp_path / "zero"
    text = "left_n = 0\nright_n = 0\n"
    assert cli.main(["solve", "--config", str(write(tmp_path, text)), "--out", str(out)]) == 0
    assert not np.any(load_field(out / "field.bin").values)


def test_divergence_exit_code(small_cfg, tmp_path, monkeypatch):
    def diverge(*args, **kwargs):
        raise solver.DivergenceError("diverged", None)

    monkeypatch.setattr(solver, "picard_solve", diverge)
    out = tmp_path / "div"
    assert cli.main(["solve", "--config", str(small_cfg), "--out", str(out)]) == 3
    assert "diverged" in json.loads((out / "iteration_report.json").read_text())["error"]


def test_sweep_single_epsilon(small_cfg, tmp_path):
    out = tmp_path / "sw"
    assert cli.main(["sweep", "--config", str(small_cfg), "--eps-list", "0.05", "--out", str(out)]) == 0
    lines = (out / "contraction.csv").read_text().splitlines()
    assert lines[0] == "epsilon,ratio,std_error"
    assert len(lines) == 2
    assert float(lines[1].split(",")[1]) < 1


def test_verify_subset(small_cfg, tmp_path):
    out = tmp_path / "ver"
    code = cli.main(["verify", "--config", str(small_cfg), "--only", "small_velocity,c_alpha", "--out", str(out)])
    assert code == 0
    rep = json.loads((out / "verify_report.json").read_text())
    assert {c["name"] for c in rep["checks"]} == {"small_velocity_integral", "c_alpha_closed_form"}
