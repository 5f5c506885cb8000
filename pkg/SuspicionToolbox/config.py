#!/usr/bin/python3
"""
Run configuration: the JSON config file merged over CONFIG_TEMPLATE.

Unknown keys and wrongly typed values are rejected with the dotted path of
the offending field.
"""

import copy
import json
from dataclasses import dataclass, replace

from packaging import version

from .constants import CONFIG_TEMPLATE, CONFIG_VERSION
from .errors import ConfigError
from .evaluator import EvaluationConfig
from .logger import LOG_LEVELS, get_logger
from .modulator import ModulatorConfig
from .synth import SynthConfig
from .trainer import TrainConfig
from .wave_loss import LossWeights

logger = get_logger(__name__)

# Also accept a list with one value per category
PER_CATEGORY_KEYS = ('synth.arrival_rate', 'synth.mean_duration')


@dataclass(frozen=True)
class RunConfig:
    """Validated settings of every command."""
    log_level: str
    seed: int
    threads: int
    modulator: ModulatorConfig
    loss: LossWeights
    train: TrainConfig
    evaluation: EvaluationConfig
    synth: SynthConfig
    source: str | None = None

    def with_overrides(self, seed: int | None = None, threads: int | None = None) -> 'RunConfig':
        """Copy with the seed and thread count replaced where given (command line flags)."""
        seed = self.seed if seed is None else seed
        threads = self.threads if threads is None else threads
        return replace(self, seed=seed, threads=threads,
                       train=replace(self.train, seed=seed, threads=threads),
                       synth=replace(self.synth, seed=seed))

    def to_dict(self) -> dict:
        m, l, t, e, s = self.modulator, self.loss, self.train, self.evaluation, self.synth
        return {
            "metadata": {"description": CONFIG_TEMPLATE["metadata"]["description"], "config_version": CONFIG_VERSION},
            "log_level": self.log_level,
            "seed": self.seed,
            "threads": self.threads,
            "modulator": {"hidden": m.hidden, "omega_alpha": m.omega_alpha, "omega_beta": m.omega_beta,
                          "omega_gamma": m.omega_gamma, "modalities": list(m.modalities)},
            "loss": {"lambda_magn": l.lambda_magn, "lambda_trend": l.lambda_trend,
                     "huber_delta": l.huber_delta, "trend_deadzone": l.trend_deadzone},
            "train": {"learning_rate": t.learning_rate, "adam_beta1": t.adam_beta1, "adam_beta2": t.adam_beta2,
                      "adam_eps": t.adam_eps, "grad_clip_norm": t.grad_clip_norm, "epochs": t.epochs,
                      "batch": t.batch, "train_frac": t.train_frac, "train_base_values": t.train_base_values},
            "evaluation": {"thresholds": list(e.thresholds), "iou_thresholds": list(e.iou_thresholds),
                           "min_len": e.min_len, "smooth_width": e.smooth_width, "max_lag": e.max_lag},
            "synth": {k: _plain(getattr(s, k)) for k in CONFIG_TEMPLATE["synth"]},
        }


def _plain(value):
    return list(value) if isinstance(value, tuple) else value


def _type_name(value) -> str:
    if isinstance(value, bool):
        return "true or false"
    if isinstance(value, int):
        return "an integer"
    if isinstance(value, float):
        return "a number"
    if isinstance(value, str):
        return "a string"
    if isinstance(value, list):
        return "a list"
    return "an object"


def _matches(template, value) -> bool:
    if isinstance(template, bool):
        return isinstance(value, bool)
    if isinstance(template, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(template, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(template, str):
        return isinstance(value, str)
    if isinstance(template, list):
        if not isinstance(value, list):
            return False
        return not template or all(_matches(template[0], v) for v in value)
    if isinstance(template, dict):
        return isinstance(value, dict)
    return False


def _merge(template: dict, data: dict, path: str = "") -> dict:
    merged = copy.deepcopy(template)
    for key, value in data.items():
        field_path = f"{path}{key}"
        if key not in template:
            logger.error("Unknown configuration key '%s'", field_path)
            raise ConfigError(field_path, "unknown key")
        expected = template[key]
        if field_path in PER_CATEGORY_KEYS:
            if not (_matches(expected, value) or _matches([expected], value)):
                raise ConfigError(field_path, f"expected a number or a list of numbers, got {json.dumps(value)}")
        elif not _matches(expected, value):
            raise ConfigError(field_path, f"expected {_type_name(expected)}, got {json.dumps(value)}")
        merged[key] = _merge(expected, value, f"{field_path}.") if isinstance(expected, dict) else value
    return merged


def _check_version(raw: str) -> None:
    try:
        found = version.parse(raw)
    except version.InvalidVersion:
        raise ConfigError('metadata.config_version', f"invalid version '{raw}'")
    supported = version.parse(CONFIG_VERSION)
    if found.major > supported.major:
        raise ConfigError('metadata.config_version', f"version {found} is newer than supported {supported}")
    if found < supported:
        logger.debug("Configuration version %s is older than %s, filling defaults", found, supported)


def config_from_dict(data: dict, source: str | None = None) -> RunConfig:
    """
    Validate a configuration dictionary and build the RunConfig.

    Args:
        data (dict): Parsed configuration, possibly partial
        source (str | None): Where the data came from, for messages

    Returns:
        RunConfig: Validated configuration

    Raises:
        ConfigError: On an unknown key, a wrong type or an out-of-range value
    """
    if not isinstance(data, dict):
        raise ConfigError('<root>', "configuration must be a JSON object")
    merged = _merge(CONFIG_TEMPLATE, data)
    _check_version(merged['metadata']['config_version'])
    if merged['log_level'] not in LOG_LEVELS:
        raise ConfigError('log_level', f"expected one of {', '.join(LOG_LEVELS)}, got '{merged['log_level']}'")
    seed, threads = merged['seed'], merged['threads']
    if not 0 <= seed < 2 ** 64:
        raise ConfigError('seed', f"expected an unsigned 64-bit integer, got {seed}")
    if threads < 1:
        raise ConfigError('threads', f"expected a positive integer, got {threads}")
    m = merged['modulator']
    modulator = ModulatorConfig(m['hidden'], float(m['omega_alpha']), float(m['omega_beta']),
                                float(m['omega_gamma']), tuple(m['modalities']))
    loss = LossWeights(**{k: float(v) for k, v in merged['loss'].items()})
    t = merged['train']
    train = TrainConfig(float(t['learning_rate']), float(t['adam_beta1']), float(t['adam_beta2']),
                        float(t['adam_eps']), float(t['grad_clip_norm']), t['epochs'], t['batch'],
                        float(t['train_frac']), t['train_base_values'], seed, threads, loss)
    e = merged['evaluation']
    if len(e['thresholds']) != 2:
        raise ConfigError('evaluation.thresholds', f"expected two thresholds, got {len(e['thresholds'])}")
    evaluation = EvaluationConfig(tuple(float(x) for x in e['thresholds']), tuple(float(x) for x in e['iou_thresholds']),
                                  e['min_len'], e['smooth_width'], e['max_lag'])
    s = dict(merged['synth'])
    for key, default in CONFIG_TEMPLATE['synth'].items():
        if isinstance(s[key], list):
            s[key] = tuple(float(v) for v in s[key])
        elif isinstance(default, float):
            s[key] = float(s[key])
    synth = SynthConfig(seed=seed, omega=tuple(modulator.omega.tolist()), **s)
    return RunConfig(merged['log_level'], seed, threads, modulator, loss, train, evaluation, synth, source)


def load_config(path: str | None = None) -> RunConfig:
    """
    Load a JSON configuration file; None gives the defaults of CONFIG_TEMPLATE.

    Raises:
        ConfigError: If the file cannot be read or holds invalid settings
    """
    if path is None:
        return config_from_dict({})
    try:
        with open(path, 'r', encoding='utf-8') as f:
            content = f.read().strip()
    except OSError as e:
        raise ConfigError('<file>', f"cannot read {path}: {e}")
    if not content:
        logger.debug("Config file %s is empty, using defaults", path)
        return config_from_dict({}, path)
    try:
        data = json.loads(content)
    except json.JSONDecodeError as e:
        raise ConfigError('<file>', f"{path} is not valid JSON: {e}")
    logger.debug("Loaded configuration from %s", path)
    return config_from_dict(data, path)


def write_config_template(path: str) -> None:
    """Write the default configuration as an editable JSON file."""
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(CONFIG_TEMPLATE, f, indent=4)
    logger.info("Default configuration written to %s", path)
