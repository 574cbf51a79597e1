import numpy as np
import pytest

from omt.problem import ProblemSpec
from omt.quadrature import QuadConfig


@pytest.fixture(scope="session")
def fast_quad():
    """Coarse deterministic rule: unit-test accuracy in milliseconds."""
    return QuadConfig(grid_n=72)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def solved_fwer_any(fast_quad):
    """Small solved instance shared across solver-dependent tests."""
    from omt.solver import solve

    spec = ProblemSpec(k=3, alpha=0.05, error="fwer", power="any", theta_obj=-2.0)
    return solve(spec, quad=fast_quad)


@pytest.fixture(scope="session")
def solved_fdr_avg(fast_quad):
    from omt.solver import solve

    spec = ProblemSpec(k=3, alpha=0.05, error="fdr", power="avg", L=3, theta_obj=-2.0)
    return solve(spec, quad=fast_quad)
