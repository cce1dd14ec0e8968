import numpy as np
import pytest

from fdecert import comparison, model, signals
from fdecert.functionals import QuadraticFunctional


@pytest.fixture
def decay_rhs():
    """x' = -x written as a delay equation with r = 0.1."""
    return model.linear_delay_rhs([[-1.0]], [[0.0]], signals.constant_delay(0.1))


@pytest.fixture
def growth_rhs():
    return model.linear_delay_rhs([[1.0]], [[0.0]], signals.constant_delay(0.1))


@pytest.fixture
def step_delay():
    return signals.random_piecewise_delay((0.1, 0.5), -10.0, 120.0, 40, seed=7)


@pytest.fixture
def tv_rhs(step_delay):
    """x' = -2x + x(t - r(t)) with r(t) a random step signal in [0.1, 0.5]."""
    return model.linear_delay_rhs([[-2.0]], [[1.0]], step_delay)


@pytest.fixture
def state_only():
    return QuadraticFunctional([[1.0]], [[0.0]], 0.1)


@pytest.fixture
def tv_functional():
    return QuadraticFunctional([[1.0]], [[1.0]], 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def quad2():
    return comparison.quadratic(2.0)
