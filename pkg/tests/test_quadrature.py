import math

import numpy as np
import pytest
from scipy import stats

from cvna import quadrature


def test_gauss_hermite_moments():
    assert quadrature.gauss_hermite(lambda x: np.ones_like(x), 0.3) == pytest.approx(1.0, abs=1e-14)
    assert quadrature.gauss_hermite(lambda x: x**2, 0.3) == pytest.approx(0.3, abs=1e-14)
    assert quadrature.gauss_hermite(lambda x: x**4, 0.3) == pytest.approx(3 * 0.09, abs=1e-13)


def test_adaptive_truncated_expectation():
    sd = math.sqrt(0.4)
    val, err = quadrature.adaptive(lambda x: np.ones_like(x), 0.4, upper=0.3)
    assert val == pytest.approx(stats.norm.cdf(0.3 / sd), abs=1e-12)
    assert err < 1e-9
    assert quadrature.adaptive(lambda x: x, 0.4, lower=1.0, upper=0.5) == (0.0, 0.0)


def test_monotone_handles_jumps():
    # E[1{X < c}] for a step function; exact value is the normal CDF
    c, var = -0.37, 0.3
    val, bound = quadrature.monotone(lambda x: (x < c).astype(float), var, tol=1e-8)
    exact = stats.norm.cdf(c / math.sqrt(var))
    assert abs(val - exact) <= bound
    assert bound <= 1e-8


def test_monotone_bound_is_rigorous_for_smooth_functions():
    val, bound = quadrature.monotone(lambda x: stats.norm.sf(x), 0.5, tol=1e-4)
    exact = stats.norm.sf(0, scale=math.sqrt(1.5))
    assert abs(val - exact) <= bound


def test_quadrature_error_carries_estimate():
    err = quadrature.QuadratureError("failed", 0.25)
    assert err.error_estimate == 0.25
    assert "0.25" in str(err)
