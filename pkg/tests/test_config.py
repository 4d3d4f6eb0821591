import numpy as np
import pytest

from semhead.config import RunConfig, apply_overrides, load_config, parse_config_text
from semhead.errors import ConfigError


def test_defaults_match_reference_profile():
    cfg = RunConfig()
    assert cfg.a == 8.0
    assert cfg.batch_size == 64
    assert cfg.lr == 0.001
    assert cfg.lambda1 == 1.0
    assert cfg.lambda2 == 0.15
    assert cfg.conf_threshold == 0.7
    assert cfg.nms_threshold == 0.5


def test_parse_round_trip(tmp_path):
    text = """
# comment line
classes = cat, dog , bird
lr = 0.01
batch_size = 32
hidden_dims = 16,8,4
class_agnostic_nms = true
"""
    path = tmp_path / "run.cfg"
    path.write_text(text)
    cfg = load_config(path)
    assert cfg.classes == ("cat", "dog", "bird")
    assert cfg.lr == 0.01
    assert cfg.batch_size == 32
    assert cfg.hidden_dims == (16, 8, 4)
    assert cfg.class_agnostic_nms is True


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("warp_speed = 9\n")


def test_bad_value_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("lr = fast\n")
    with pytest.raises(ConfigError):
        parse_config_text("lr = -3\n")
    with pytest.raises(ConfigError):
        parse_config_text("conf_threshold = 1.5\n")


def test_malformed_line_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("just some words\n")


def test_flags_win_over_file():
    cfg = parse_config_text("lr = 0.01\nseed = 3\n")
    cfg = apply_overrides(cfg, {"lr": 0.5, "seed": None})
    assert cfg.lr == 0.5
    assert cfg.seed == 3


def test_hash_stable_and_sensitive():
    a = RunConfig()
    b = RunConfig()
    assert a.hash() == b.hash()
    c = apply_overrides(a, {"seed": 1})
    assert c.hash() != a.hash()


def test_threads_do_not_change_hash():
    a = RunConfig()
    b = apply_overrides(a, {"threads": 8})
    assert a.hash() == b.hash()


def test_entropy_threshold_resolution():
    cfg = RunConfig()
    assert cfg.resolved_entropy_threshold(4) == pytest.approx(0.5 * np.log(4))
    cfg = apply_overrides(cfg, {"entropy_threshold": 0.25})
    assert cfg.resolved_entropy_threshold(4) == 0.25


def test_train_config_and_weights_derivation():
    cfg = apply_overrides(RunConfig(), {"lambda2": 0.3, "epochs": 7})
    tc = cfg.train_config(num_classes=5)
    assert tc.epochs == 7
    assert tc.weights.uncertainty_weight == 0.3
    assert 0 < tc.weights.entropy_threshold < np.log(5)


def test_duplicate_classes_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("classes = cat, cat\n")
