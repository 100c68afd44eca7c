"""Config parsing, validation and round-trip serialization."""

import pytest

from oscar_mrfm.config import RunConfig, parse_config_text
from oscar_mrfm.errors import ConfigError

MINIMAL = """
# comment line
mode = gaussian
seed = 42        # trailing comment
n_samples = 1024
kappa_s = 1e-4
"""


def test_parse_basic():
    values = parse_config_text(MINIMAL)
    assert values == {"mode": "gaussian", "seed": 42, "n_samples": 1024, "kappa_s": 1e-4}


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config_text("kapa_s = 1e-4\n")


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("seed = 1\nseed = 2\n")


def test_bad_value_rejected():
    with pytest.raises(ConfigError, match="cannot parse"):
        parse_config_text("seed = banana\n")
    with pytest.raises(ConfigError, match="key = value"):
        parse_config_text("just some words\n")


def test_round_trip_reproduces_derived_coefficients():
    cfg = RunConfig.from_text(MINIMAL)
    text = cfg.to_text()
    cfg2 = RunConfig.from_text(text)
    p, q = cfg.params, cfg2.params
    assert q.gamma_big == p.gamma_big
    assert q.a1 == p.a1 and q.b1 == p.b1
    assert q.lambda_pc == p.lambda_pc
    assert cfg2.to_text() == text


def test_sweep_list_parsing():
    cfg = RunConfig.from_text("mode = sweep\nkappa_s_sweep = 1e-3, 1e-4, 1e-5\nn_samples = 1024\n")
    assert cfg.kappa_s_sweep == (1e-3, 1e-4, 1e-5)


def test_lambda_from_optics_block():
    cfg = RunConfig.from_text("amp_scale = 4\nn_samples = 64\n")
    from oscar_mrfm.model import OpticsParams, derive_lambda

    assert cfg.params.lambda_pc == derive_lambda(OpticsParams(amp_scale=4.0), cfg.params.e_d)


def test_explicit_lambda_beats_optics():
    cfg = RunConfig.from_text("lambda_pc = 1e-3\namp_scale = 4\nn_samples = 64\n")
    assert cfg.params.lambda_pc == 1e-3


def test_classify_requires_power_of_two():
    with pytest.raises(ConfigError, match="power of two"):
        RunConfig.from_text("mode = classify\nn_samples = 1000\n")


def test_dt_int_must_divide_sample_spacing():
    with pytest.raises(ConfigError, match="divide"):
        RunConfig.from_text("dt_int = 3e-3\nn_samples = 64\n")


def test_seed_nonnegative():
    with pytest.raises(ConfigError):
        RunConfig.from_text("seed = -3\nn_samples = 64\n")


def test_z0_defaults_to_minus_amp_set():
    cfg = RunConfig.from_text("amp_set = 4\nr_u0 = 0.5\nn_samples = 64\n")
    assert cfg.initial_condition().z0 == -4.0


def test_substeps_and_t_sampling():
    cfg = RunConfig.from_text("n_samples = 524288\nmode = classify\n")
    assert cfg.substeps == 20
    assert cfg.t_sampling == pytest.approx(10485.76)


def test_config_file_not_found(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        RunConfig.from_file(tmp_path / "missing.cfg")
