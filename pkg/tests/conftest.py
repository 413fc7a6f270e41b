import pytest

from capband import (
    GridConfig,
    ModelParams,
    ProductionFn,
    derived_constants,
    solve_boundaries,
)


@pytest.fixture(scope="session")
def params():
    """Default parameter set used throughout: sqrt marginal profit, unit
    volatility, combined discount 0.8, costs (1.0, 0.8), horizon 1."""
    return ModelParams(mu_c=0.2, sigma_c=1.0, mu_f=0.6, f_c=1.0,
                       c_plus=1.0, c_minus=0.8, horizon=1.0)


@pytest.fixture(scope="session")
def prod():
    return ProductionFn(scale=1.0, exponent=0.5)


@pytest.fixture(scope="session")
def dc(params):
    return derived_constants(params)


@pytest.fixture(scope="session")
def grid200():
    return GridConfig(n_steps=200)


@pytest.fixture(scope="session")
def curves200(params, prod, grid200):
    return solve_boundaries(params, prod, grid200)


@pytest.fixture(scope="session")
def curves400(params, prod):
    return solve_boundaries(params, prod, GridConfig(n_steps=400))


def rel_err(a, b):
    return abs(a - b) / max(abs(b), 1e-300)
