"""
Configuration module for Leverage Bidder.
Loads and validates environment and experiment configuration from YAML file.
"""

from __future__ import annotations

import os
import re
import copy
import hashlib
import logging
from typing import Any, Optional

import yaml

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = 'config/reference.yaml'

ALGORITHMS = ('manual', 'cem', 'a2c', 'ddpg', 'htlb_ddpg', 'htlb_a2c')

_FIXED_PATTERN = re.compile(r'^fixed\(\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*\)$')

DEFAULT_ENVIRONMENT = {
    'population_seed': 0,
    'n_targets': 8,
    'n_competitors': 24,
    'horizon': 7,
    'gamma': 0.9,
    'range': 1.0,
    'requests': 2000,
    'slots': 3,
    'match_rate': 0.8,
    'stochastic': True,
    'rec_noise': 0.0,
    'rec_click_scale': 0.1,
    'score_jitter': 0.0,
    'leverage_lambda': 1.0,
    'leverage_mu': 0.05,
    'reward_weighting': 'total',
    'reward_scale': 100.0,
}

DEFAULT_HYPERPARAMETERS = {
    'ddpg': {
        'hidden': [100, 50],
        'lr_actor': 0.001,
        'lr_critic': 0.0001,
        'tau': 0.01,
        'l2_critic': 0.01,
        'capacity': 10000,
        'batch_size': 64,
        'expand': 10,
        'updates_per_step': 1,
        'ou_theta': 0.15,
        'ou_sigma': 0.2,
        'noise_floor': 0.1,
    },
    'a2c': {
        'hidden': [100, 50],
        'n_actions': 10,
        'lr_policy': 0.001,
        'lr_value': 0.001,
        'entropy': 0.01,
        'expand': 10,
    },
    'cem': {
        'hidden': [100, 50],
        'population': 10,
        'elite_frac': 0.2,
        'init_std': 0.1,
        'std_floor': 0.001,
        'extra_std': 0.0,
        'extra_decay': 0,
    },
}

DEFAULT_EXPERIMENT = {
    'algorithms': ['manual'],
    'episodes': 300,
    'seeds': [0, 1, 2, 3, 4],
    'eval_seeds': [100000, 100001, 100002],
    'output_dir': 'runs',
    'jobs': 1,
    'sweep_ratios': [-1.0, -0.5, 0.0, 0.5, 1.0],
    'exposure_fits': None,
}


class ConfigError(Exception):
    """Configuration error exception."""
    pass


def expand_env_vars(value: Any) -> Any:
    """
    Recursively expand environment variables in configuration values.
    Supports ${VAR_NAME} syntax.
    """
    if isinstance(value, str):
        pattern = re.compile(r'\$\{([^}]+)\}')
        for match in pattern.findall(value):
            value = value.replace(f'${{{match}}}', os.environ.get(match, ''))
        return value
    elif isinstance(value, dict):
        return {k: expand_env_vars(v) for k, v in value.items()}
    elif isinstance(value, list):
        return [expand_env_vars(item) for item in value]
    return value


def parse_algorithm(name: str) -> tuple[str, Optional[float]]:
    """
    Split an algorithm name into its kind and optional fixed ratio.

    Args:
        name: Algorithm name, e.g. 'htlb_ddpg' or 'fixed(0.5)'

    Returns:
        Tuple of (kind, ratio); ratio is None unless kind is 'fixed'

    Raises:
        ConfigError: If the algorithm is not recognized
    """
    if not isinstance(name, str):
        raise ConfigError(f"Algorithm must be a string, got {name!r}")
    name = name.strip()
    if name in ALGORITHMS:
        return name, None
    match = _FIXED_PATTERN.match(name)
    if match:
        return 'fixed', float(match.group(1))
    raise ConfigError(f"Unknown algorithm: {name}")


def load_config(config_path: str = None) -> dict:
    """
    Load configuration from YAML file.

    Args:
        config_path: Path to config file. If None, uses LEVERAGE_CONFIG env var.

    Returns:
        Configuration dictionary with defaults filled in.

    Raises:
        ConfigError: If configuration is invalid or file not found.
    """
    if config_path is None:
        config_path = os.environ.get('LEVERAGE_CONFIG', DEFAULT_CONFIG_PATH)

    if not os.path.exists(config_path):
        raise ConfigError(f"Configuration file not found: {config_path}")

    try:
        with open(config_path, 'r', encoding='utf-8') as f:
            config = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"Invalid YAML in configuration file: {e}")

    config = expand_env_vars(config)
    validate_config(config)

    # Relative fit paths are resolved against the config file location
    fits = config['experiment'].get('exposure_fits')
    if fits and not os.path.isabs(fits):
        config['experiment']['exposure_fits'] = os.path.join(
            os.path.dirname(os.path.abspath(config_path)), fits
        )

    logger.info(f"Configuration loaded from {config_path}")
    return config


def _validate_product(i: int, product: dict) -> None:
    required = ['id', 'apctr_ad', 'apcvr_ad', 'bid', 'ppb']
    for field in required:
        if field not in product:
            raise ConfigError(f"Product {i+1}: missing required field '{field}'")
    product.setdefault('target', True)
    if product['target']:
        for field in ('traffic_win', 'exposure_effect'):
            if field not in product:
                raise ConfigError(f"Product {i+1}: missing required field '{field}'")


def validate_config(config: dict) -> None:
    """
    Validate configuration dictionary and fill defaults.

    Raises:
        ConfigError: If required fields are missing or invalid.
    """
    if not config:
        raise ConfigError("Configuration is empty")
    if not isinstance(config, dict):
        raise ConfigError("Configuration must be a mapping")

    environment = config.setdefault('environment', {})
    experiment = config.setdefault('experiment', {})
    if not isinstance(environment, dict) or not isinstance(experiment, dict):
        raise ConfigError("Sections 'environment' and 'experiment' must be mappings")

    for key, value in DEFAULT_ENVIRONMENT.items():
        environment.setdefault(key, value)

    if not 0.0 <= float(environment['gamma']) <= 1.0:
        raise ConfigError(f"gamma must lie in [0, 1], got {environment['gamma']}")
    if float(environment['range']) <= 0:
        raise ConfigError(f"range must be positive, got {environment['range']}")
    if int(environment['horizon']) < 1:
        raise ConfigError(f"horizon must be at least 1, got {environment['horizon']}")
    if int(environment['slots']) < 1:
        raise ConfigError(f"slots must be at least 1, got {environment['slots']}")
    if int(environment['requests']) < 0:
        raise ConfigError(f"requests must be nonnegative, got {environment['requests']}")
    if not 0.0 <= float(environment['match_rate']) <= 1.0:
        raise ConfigError(f"match_rate must lie in [0, 1], got {environment['match_rate']}")
    if environment['reward_weighting'] not in ('total', 'count'):
        raise ConfigError(
            f"reward_weighting must be 'total' or 'count', got {environment['reward_weighting']}"
        )
    if float(environment['reward_scale']) <= 0:
        raise ConfigError(f"reward_scale must be positive, got {environment['reward_scale']}")

    products = environment.get('products')
    if products is not None:
        if not isinstance(products, list):
            raise ConfigError("environment.products must be a list")
        for i, product in enumerate(products):
            _validate_product(i, product)

    # A single 'algorithm' key is accepted as a one-element list
    if 'algorithm' in experiment:
        experiment.setdefault('algorithms', [experiment.pop('algorithm')])
    for key, value in DEFAULT_EXPERIMENT.items():
        experiment.setdefault(key, copy.deepcopy(value))

    if isinstance(experiment['algorithms'], str):
        experiment['algorithms'] = [experiment['algorithms']]
    if not experiment['algorithms']:
        raise ConfigError("At least one algorithm must be configured")
    for name in experiment['algorithms']:
        kind, ratio = parse_algorithm(name)
        if kind == 'fixed' and abs(ratio) > float(environment['range']):
            raise ConfigError(f"Fixed ratio {ratio} exceeds range {environment['range']}")

    if not isinstance(experiment['seeds'], list) or len(experiment['seeds']) == 0:
        raise ConfigError("At least one seed must be configured")
    if not isinstance(experiment['eval_seeds'], list) or len(experiment['eval_seeds']) == 0:
        raise ConfigError("At least one evaluation seed must be configured")
    if int(experiment['episodes']) < 1:
        raise ConfigError(f"episodes must be at least 1, got {experiment['episodes']}")
    if int(experiment['jobs']) < 1:
        raise ConfigError(f"jobs must be at least 1, got {experiment['jobs']}")
    if not experiment['output_dir']:
        raise ConfigError("output_dir must not be empty")

    hyper = experiment.setdefault('hyperparameters', {})
    for family, defaults in DEFAULT_HYPERPARAMETERS.items():
        section = hyper.setdefault(family, {})
        unknown = set(section) - set(defaults)
        if unknown:
            raise ConfigError(f"Unknown {family} hyperparameters: {', '.join(sorted(unknown))}")
        for key, value in defaults.items():
            section.setdefault(key, copy.deepcopy(value))


def get_default_config() -> dict:
    """Return default configuration template."""
    return {
        'environment': copy.deepcopy(DEFAULT_ENVIRONMENT),
        'experiment': {
            **copy.deepcopy(DEFAULT_EXPERIMENT),
            'hyperparameters': copy.deepcopy(DEFAULT_HYPERPARAMETERS),
        },
    }


def config_hash(config_path: str) -> str:
    """
    Calculate SHA256 of the configuration file bytes.

    Args:
        config_path: Path to configuration file

    Returns:
        SHA256 hash as hexadecimal string
    """
    sha256_hash = hashlib.sha256()
    with open(config_path, 'rb') as f:
        for chunk in iter(lambda: f.read(8192), b''):
            sha256_hash.update(chunk)
    return sha256_hash.hexdigest()
