"""
Small two-target market used across the test suite.
"""

from src.curves import TrafficWinFn, ExposureEffectFn
from src.market import MarketEnv, Product


def make_products():
    """Targets 0 and 1 plus one competitor that outbids both at alpha = 0."""
    T = TrafficWinFn(0.3, 1000.0, 4.0)
    U = ExposureEffectFn(1200.0, 0.9, 0.1)
    return [
        Product(id=0, apctr_ad=0.05, apcvr_ad=0.02, bid=1.0, ppb=50.0,
                traffic_win=T, exposure_effect=U, initial_score=0.5),
        Product(id=1, apctr_ad=0.04, apcvr_ad=0.02, bid=1.0, ppb=80.0,
                traffic_win=T, exposure_effect=U, initial_score=0.5),
        Product(id=2, apctr_ad=0.05, apcvr_ad=0.02, bid=1.2, ppb=60.0, target=False),
    ]


def make_env_config(**overrides):
    config = {
        'requests': 200,
        'slots': 1,
        'match_rate': 0.8,
        'horizon': 3,
        'stochastic': False,
    }
    config.update(overrides)
    return config


def make_env(**overrides):
    return MarketEnv(make_env_config(**overrides), products=make_products())


def make_config(algorithms, **experiment):
    """Validated full configuration around the small market."""
    from src.config import validate_config

    config = {
        'environment': {
            **make_env_config(),
            'products': [p.to_dict() for p in make_products()],
        },
        'experiment': {
            'algorithms': algorithms,
            'episodes': 2,
            'seeds': [0],
            'eval_seeds': [1000],
            'hyperparameters': {
                'ddpg': {'hidden': [8], 'batch_size': 4, 'expand': 2},
                'a2c': {'hidden': [8], 'n_actions': 5, 'expand': 2},
                'cem': {'hidden': [4], 'population': 2},
            },
            **experiment,
        },
    }
    validate_config(config)
    return config
