import json

import pytest

from dlf.config import ConfigError, RunConfig, describe_keys, parse_override, tiny_config


def test_defaults_valid_and_round_trip(tmp_path):
    cfg = RunConfig()
    cfg.save(tmp_path / "c.json")
    assert RunConfig.from_file(tmp_path / "c.json") == cfg


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"d_modle": 8})
    with pytest.raises(ConfigError):
        parse_override("nope=1")


def test_override_coercion():
    assert parse_override("d_model=32") == ("d_model", 32)
    assert parse_override("lr=3e-4") == ("lr", 3e-4)
    assert parse_override("use_lfa=false") == ("use_lfa", False)
    assert parse_override("beta_sp_l=0.5") == ("beta_sp_l", 0.5)
    assert parse_override("beta_sp_l=none") == ("beta_sp_l", None)
    assert parse_override("data_dir=/tmp/x") == ("data_dir", "/tmp/x")
    with pytest.raises(ConfigError):
        parse_override("d_model=abc")
    with pytest.raises(ConfigError):
        parse_override("d_model")


@pytest.mark.parametrize("bad", [
    {"modalities": "LX"}, {"modalities": ""}, {"d_model": 10, "heads": 4}, {"dropout": 1.0},
    {"lambda_m": -1.0}, {"triplet_metric": "l2"}, {"patience": 0}, {"lfa_depth": 0},
])
def test_validation(bad):
    with pytest.raises(ConfigError):
        RunConfig(**bad)


def test_modality_order_canonicalised():
    assert RunConfig(modalities="AL").modalities == "LA"


def test_beta_views():
    cfg = RunConfig(beta_sp=0.3, beta_sp_v=0.1)
    assert cfg.beta_specific() == {"L": 0.3, "V": 0.1, "A": 0.3}
    off = RunConfig(use_hp=False)
    assert off.beta_shared() == 0.0 and set(off.beta_specific().values()) == {0.0}


def test_describe_keys_lists_every_field():
    text = describe_keys()
    for key in RunConfig().to_dict():
        assert f"  {key} (default" in text


def test_tiny_config():
    cfg = tiny_config(seed=3)
    assert (cfg.d_model, cfg.encoder_depth, cfg.batch_size, cfg.seed) == (8, 1, 2, 3)
