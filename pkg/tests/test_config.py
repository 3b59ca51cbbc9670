"""Run-configuration parsing and validation."""

import pytest

from polytherm.config import SCHEMA, ConfigError, parse_config, parse_config_text

MINIMAL = """
[grid]
n = 8
[model]
name = paper
[time]
T = 0.1
h = 0.01
"""


def test_minimal_file_gets_documented_defaults(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(MINIMAL)
    cfg = parse_config(path)
    assert cfg.grid.n == (8, 8, 8) and cfg.grid.L == (1.0, 1.0, 1.0)
    assert cfg.nsteps == 10
    assert cfg.model_name == "paper"
    assert cfg.model_params["delta"] == SCHEMA["model"]["delta"][1]
    assert cfg.step.newton_tol == 1e-9
    assert cfg.initial["preset"] == "smooth-wave"
    assert cfg.heat["preset"] == "zero"
    assert cfg.diagnostics["kappa"] == 10.0 and cfg.diagnostics["lemma_c"] == "sharp"
    assert cfg.study["levels"] == [4e-3, 2e-3, 1e-3]
    assert cfg.checkpoint == "final"


def test_per_axis_grid_and_comments():
    cfg = parse_config_text("[grid]\nn = 4 6 8   # per axis\nL = 1, 2, 3\n[time]\nT = 1\nh = 0.5\n")
    assert cfg.grid.n == (4, 6, 8) and cfg.grid.L == (1.0, 2.0, 3.0)


def test_model_parameters_reach_the_model():
    cfg = parse_config_text(MINIMAL.replace("name = paper", "name = paper\nrho = 1.5\nbeta_w = 2"))
    m = cfg.make_model()
    assert m.rho == 1.5 and m.beta_w == 2.0


def test_lemma_constant():
    cfg = parse_config_text(MINIMAL)
    m = cfg.make_model()
    assert cfg.lemma_constant(m) == pytest.approx(0.5)
    cfg = parse_config_text(MINIMAL + "[diagnostics]\nlemma_c = full\n")
    assert cfg.lemma_constant(m) == 1.0
    cfg = parse_config_text(MINIMAL + "[diagnostics]\nlemma_c = 0.25\n")
    assert cfg.lemma_constant(m) == 0.25


def _err(text):
    with pytest.raises(ConfigError) as exc:
        parse_config_text(text)
    return exc.value


def test_rejects_ell_one():
    e = _err(MINIMAL.replace("name = paper", "name = paper\nell = 1"))
    assert "ell > 1" in str(e)
    assert e.line == 6  # MINIMAL starts with a blank line


def test_rejects_non_integral_step_count():
    e = _err(MINIMAL.replace("T = 0.1", "T = 0.35").replace("h = 0.01", "h = 0.1"))
    assert "integer multiple" in str(e)


@pytest.mark.parametrize("patch, needle", [
    ("[grid]\nn = 8\nnn = 3\n", "unknown key 'nn'"),
    ("[grid]\nn = 8\n[gird]\n", "unknown section"),
    ("[grid]\nn = 8\nq\n", "cannot parse"),
])
def test_unknown_keys_and_syntax_errors_carry_line_numbers(patch, needle):
    e = _err(patch + "[time]\nT = 1\nh = 1\n")
    assert needle in str(e)
    assert e.line == 3


@pytest.mark.parametrize("text, needle", [
    ("[grid]\nn = 8\n", "missing required section [time]"),
    ("[grid]\nn = 8\n[time]\nT = 1\n", "missing required key 'h'"),
    ("[grid]\nn = 2\n[time]\nT = 1\nh = 1\n", "at least 4"),
    ("[grid]\nn = 8\n[time]\nT = 1\nh = -1\n", "positive"),
    ("[grid]\nn = 8\n[time]\nT = 1\nh = 1\n[model]\nname = rubber\n", "unknown model"),
    ("[grid]\nn = 8\n[time]\nT = 1\nh = 1\n[model]\np = 3\n", "p = 4"),
    ("[grid]\nn = 8\n[time]\nT = 1\nh = 1\n[model]\nq = 1.5\n", "q >= 2"),
    ("[grid]\nn = 8\n[time]\nT = 1\nh = 1\n[model]\nrho = 1\n", "rho > 1"),
    ("[grid]\nn = 8\n[time]\nT = 1\nh = 1\n[solver]\ncg_tol = 0\n", "cg_tol"),
    ("[grid]\nn = 8\n[time]\nT = 1\nh = 1\n[initial]\npreset = vortex\n", "unknown preset"),
    ("[grid]\nn = 8\n[time]\nT = 1\nh = 1\n[diagnostics]\nlemma_c = loose\n", "lemma_c"),
    ("[grid]\nn = 8\n[time]\nT = 1\nh = one\n", "could not convert"),
    ("[grid]\nn = 8\n[time]\nT = 1\nh = 1\nh = 2\n", "duplicate"),
])
def test_invariant_violations_name_the_key(text, needle):
    assert needle in str(_err(text))
