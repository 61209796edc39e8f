import json

import pytest

from snse_galerkin.config import parse_config, scenario_from_config, validate_config
from snse_galerkin.errors import ConfigurationError

MINIMAL = """\
domain:
  kind: PeriodicTorus
basis:
  n_modes: 8
physics:
  viscosity: 0.5
integrator:
  dt: 0.01
  T: 0.1
"""


def _write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_minimal_config_gets_defaults(tmp_path):
    cfg = parse_config(_write(tmp_path, MINIMAL))
    assert cfg.seed == 0
    assert cfg.domain.side_length == 1.0 and cfg.domain.grid_points == 32
    assert cfg.noise.kind == "none"
    assert cfg.study.eps == 0.25 and cfg.study.n_samples == 200
    assert cfg.n_ref == 8 and cfg.levels() == [8]


def test_json_config_accepted(tmp_path):
    data = {"domain": {"kind": "PeriodicTorus"}, "basis": {"n_modes": 4},
            "physics": {"viscosity": 1.0}, "integrator": {"dt": 0.1, "T": 1.0}}
    cfg = parse_config(_write(tmp_path, json.dumps(data), "cfg.json"))
    assert cfg.basis.n_modes == 4


def test_alpha_one_rejected(tmp_path):
    text = MINIMAL + "noise:\n  kind: AlphaGrowth\n  alpha: 1.0\n"
    with pytest.raises(ConfigurationError, match=r"alpha must lie in \[0,1\)") as exc:
        parse_config(_write(tmp_path, text))
    assert "noise.alpha" in str(exc.value) and "line 12" in str(exc.value)


def test_unknown_key_suggests_nearest(tmp_path):
    text = MINIMAL.replace("viscosity", "viscocity")
    with pytest.raises(ConfigurationError) as exc:
        parse_config(_write(tmp_path, text))
    msg = str(exc.value)
    assert "viscocity" in msg and "did you mean 'viscosity'" in msg and "line 6" in msg


def test_semantic_errors(tmp_path):
    bad_levels = MINIMAL + "noise:\n  kind: Additive\n  K: 4\nstudy:\n  levels: [2, 6]\n"
    with pytest.raises(ConfigurationError, match="smallest study level"):
        parse_config(_write(tmp_path, bad_levels))
    projected = bad_levels.replace("  K: 4\n", "  K: 4\n  project_to_level: true\n")
    assert parse_config(_write(tmp_path, projected)).noise.project_to_level
    with pytest.raises(ConfigurationError, match="n_ref"):
        validate_config({"domain": {"kind": "PeriodicTorus"}, "basis": {"n_modes": 4, "n_ref": 8},
                         "physics": {"viscosity": 1.0}, "integrator": {"dt": 0.1, "T": 1.0}})
    with pytest.raises(ConfigurationError, match="requires SaturatedDiagonal"):
        parse_config(_write(tmp_path, MINIMAL + "study:\n  variant: exp_bounded\n"))


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigurationError, match="not found"):
        parse_config(tmp_path / "nope.yaml")
    with pytest.raises(ConfigurationError):
        parse_config(_write(tmp_path, "domain: [unclosed"))
    with pytest.raises(ConfigurationError, match="mapping"):
        parse_config(_write(tmp_path, "- a\n- b\n"))


def test_scenario_from_config(tmp_path):
    text = MINIMAL + "noise:\n  kind: DiagonalLinear\n  K: 2\n  sigma0: 0.5\n"
    cfg = parse_config(_write(tmp_path, text))
    scen = scenario_from_config(cfg)
    assert scen.basis.dim == 8 and scen.noise.K == 2
    assert scen.integrator.nu == 0.5
    again = scenario_from_config(parse_config(_write(tmp_path, text, "b.yaml")))
    assert again.hash == scen.hash
