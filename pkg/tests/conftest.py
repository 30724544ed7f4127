"""
Shared pytest fixtures.
"""

import pytest

from tests.fixtures import make_env, make_env_config, make_products


@pytest.fixture
def products():
    return make_products()


@pytest.fixture
def env_config():
    return make_env_config()


@pytest.fixture
def env():
    return make_env()
