"""Shared fixtures"""

import numpy as np
import pytest

from a0c.config import ExperimentConfig
from a0c.core.env import PendulumEnv
from a0c.core.netapprox import init_params


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def env():
    return PendulumEnv()


@pytest.fixture
def short_env():
    return PendulumEnv(horizon=5)


@pytest.fixture
def tiny_params():
    """1 hidden layer of 4 units; small enough for finite differences"""
    return init_params(seed=3, obs_dim=3, n_a=1, hidden_units=4, hidden_layers=1)


@pytest.fixture
def small_config():
    """Few short episodes on a small network"""
    return ExperimentConfig(
        n_trace=2,
        horizon=5,
        hidden_units=8,
        hidden_layers=2,
        repetitions=2,
        budget_steps=30,
        batch=4,
        record_wall_time=False,
    )
