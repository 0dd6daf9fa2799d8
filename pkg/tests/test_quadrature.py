import math

import numpy as np
import pytest
from scipy.special import beta

from fgauss import quadrature as quad
from fgauss.errors import QuadratureFailure


def test_smooth_polynomial_exact():
    assert quad.integrate(lambda x: x**7 - 3 * x**2, 0.0, 2.0) == pytest.approx(2**8 / 8 - 8, rel=1e-14)


@pytest.mark.parametrize("p", [-0.75, -0.5, -0.2, 0.3])
def test_left_power_singularity(p):
    # int_0^1 x^p (1 + x) dx
    ref = 1 / (p + 1) + 1 / (p + 2)
    assert quad.integrate(lambda x: x**p * (1 + x), 0.0, 1.0, left=p) == pytest.approx(ref, rel=1e-11)


def test_both_endpoints_beta_function():
    a, b = -0.3, -0.6
    val = quad.integrate(lambda x, dl, dr: dl**a * dr**b, 0.0, 1.0, a, b, gaps=True)
    assert val == pytest.approx(beta(a + 1, b + 1), rel=1e-11)


def test_gaps_are_accurate_near_the_right_endpoint():
    # the complement dr is computed without cancellation
    r = quad.rule(0.0, 1.0, right=-0.5)
    assert np.all(r.dr > 0)
    assert np.allclose(r.dl + r.dr, 1.0, atol=1e-15)


def test_empty_interval():
    assert quad.integrate(np.sin, 1.0, 1.0) == 0.0


def test_failure_is_reported():
    with pytest.raises(QuadratureFailure):
        quad.integrate(lambda x: np.sin(1 / x) / x, 0.0, 1.0, rtol=1e-14, max_refine=1)


def test_interpolation_matrix_reproduces_polynomials():
    M = quad.interpolation_matrix(8, np.array([0.1, 0.5, 0.93]))
    x, _ = quad.gauss_legendre(8)
    vals = M @ (x**5 - x)
    assert vals == pytest.approx(np.array([0.1, 0.5, 0.93]) ** 5 - [0.1, 0.5, 0.93], abs=1e-12)
    assert math.isclose(M.sum(axis=1)[0], 1.0, rel_tol=1e-12)
