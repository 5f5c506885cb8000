import json

import pytest

from SuspicionToolbox.config import config_from_dict, load_config, write_config_template
from SuspicionToolbox.constants import CONFIG_TEMPLATE
from SuspicionToolbox.errors import ConfigError


def test_defaults_follow_the_template():
    config = load_config()
    assert config.modulator.hidden == 64
    assert config.loss.lambda_magn == 0.5 and config.loss.lambda_trend == 0.3
    assert config.evaluation.thresholds == (0.3, 0.6)
    assert config.train.epochs == 50
    assert config.synth.frames_per_sequence == 600
    assert config.to_dict() == {k: v for k, v in CONFIG_TEMPLATE.items()}


def test_partial_config_keeps_other_defaults():
    config = config_from_dict({"modulator": {"hidden": 16}, "loss": {"lambda_trend": 0}})
    assert config.modulator.hidden == 16
    assert config.modulator.omega_beta == 1.0
    assert config.loss.lambda_trend == 0.0
    assert config.loss.lambda_magn == 0.5


def test_unknown_key_names_its_path():
    with pytest.raises(ConfigError) as info:
        config_from_dict({"train": {"epoch": 3}})
    assert info.value.field == 'train.epoch'


def test_wrong_type_names_its_path():
    with pytest.raises(ConfigError, match='modulator.hidden: expected an integer'):
        config_from_dict({"modulator": {"hidden": "wide"}})
    with pytest.raises(ConfigError, match='train.train_base_values'):
        config_from_dict({"train": {"train_base_values": 1}})


def test_out_of_range_values():
    with pytest.raises(ConfigError, match='train.epochs'):
        config_from_dict({"train": {"epochs": 0}})
    with pytest.raises(ConfigError, match='evaluation.thresholds'):
        config_from_dict({"evaluation": {"thresholds": [0.3, 0.6, 0.9]}})
    with pytest.raises(ConfigError, match='log_level'):
        config_from_dict({"log_level": "chatty"})
    with pytest.raises(ConfigError, match='modulator.modalities'):
        config_from_dict({"modulator": {"modalities": ["visual", "audio"]}})


def test_config_version_check():
    config_from_dict({"metadata": {"config_version": "1.2"}})
    with pytest.raises(ConfigError, match='metadata.config_version'):
        config_from_dict({"metadata": {"config_version": "2.0"}})
    with pytest.raises(ConfigError, match='metadata.config_version'):
        config_from_dict({"metadata": {"config_version": "one"}})


def test_template_round_trip(tmp_path):
    path = tmp_path / 'config.json'
    write_config_template(str(path))
    config = load_config(str(path))
    assert config.source == str(path)
    assert config.to_dict() == json.loads(path.read_text(encoding='utf-8'))


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / 'config.json'
    path.write_text('  \n', encoding='utf-8')
    assert load_config(str(path)).modulator.hidden == 64


def test_unreadable_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / 'missing.json'))
    broken = tmp_path / 'broken.json'
    broken.write_text('{"seed": ', encoding='utf-8')
    with pytest.raises(ConfigError):
        load_config(str(broken))


def test_overrides_reach_every_section():
    config = load_config().with_overrides(seed=42, threads=3)
    assert config.seed == 42 and config.train.seed == 42 and config.synth.seed == 42
    assert config.threads == 3 and config.train.threads == 3
    assert load_config().with_overrides().seed == 0


def test_base_values_reach_the_generator():
    config = config_from_dict({"modulator": {"omega_gamma": 0.04}})
    assert config.synth.omega == (0.05, 1.0, 0.04)


def test_per_category_synth_lists():
    rates = [0.0] * 10 + [0.01]
    config = config_from_dict({"synth": {"arrival_rate": rates, "mean_duration": [5] * 11}})
    assert config.synth.arrival_rate == tuple(rates)
    assert config.synth.mean_duration == (5.0,) * 11
    assert config.to_dict()["synth"]["arrival_rate"] == rates
    assert config_from_dict(config.to_dict()).synth == config.synth


def test_per_category_lists_are_checked():
    with pytest.raises(ConfigError) as info:
        config_from_dict({"synth": {"arrival_rate": [0.01] * 3}})
    assert info.value.field == 'synth.arrival_rate'
    with pytest.raises(ConfigError, match='synth.mean_duration: expected a number or a list'):
        config_from_dict({"synth": {"mean_duration": ["long"] * 11}})
    with pytest.raises(ConfigError) as info:
        config_from_dict({"synth": {"fps": [30.0]}})
    assert info.value.field == 'synth.fps'
