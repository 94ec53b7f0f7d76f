import numpy as np
import pytest

import hamjump as hj


@pytest.fixture(scope="session")
def gaussian_model_2d():
    """The reference configuration: quadratic well, constant rate, Gaussian collisions."""
    return hj.ModelSpec(
        2,
        4.0,
        hj.QuadraticPotential(1.0),
        hj.constant_rate(2.0),
        hj.Density("standard_gaussian", 2),
    )


@pytest.fixture(scope="session")
def heavy_model_2d():
    return hj.ModelSpec(
        2,
        4.0,
        hj.QuadraticPotential(1.0),
        hj.constant_rate(2.0),
        hj.Density("heavy_tail", 2, 1.0),
    )


@pytest.fixture(scope="session")
def sinusoidal_model_2d():
    return hj.ModelSpec(
        2,
        4.0,
        hj.QuadraticPotential(1.0),
        hj.sinusoidal_rate(1.0, 3.0),
        hj.Density("standard_gaussian", 2),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240814)


def offset_pair(d=2, offset=1.0):
    x = np.zeros(d)
    x[0] = offset
    return hj.CoupledState(
        hj.PhaseState(x, np.zeros(d)), hj.PhaseState(np.zeros(d), np.zeros(d))
    )
