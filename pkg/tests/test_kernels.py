import math

import numpy as np
import pytest

import oracles
from fgauss import Constant, Custom, FbmLiouville, Identity, RiemannLiouville, Separable, TimeGrid
from fgauss.errors import DomainError, NonFinite
from fgauss.kernels import cell_integral, covariance, eval_dF_dt, eval_kernel, phi, validate

SQRT_PI = math.sqrt(math.pi)


def test_identity_and_half_fbm_are_indicators():
    assert eval_kernel(Identity(), 0.7, 0.3) == 1.0
    assert eval_kernel(FbmLiouville(0.5), 0.7, 0.3) == 1.0
    assert eval_kernel(Identity(), 0.3, 0.7) == 0.0


def test_rl_kernel_and_derivative_closed_forms():
    k = RiemannLiouville(0.5)
    assert eval_kernel(k, 1.0, 0.0) == pytest.approx(2 / SQRT_PI, rel=1e-13)
    assert eval_dF_dt(k, 1.0, 0.75) == pytest.approx(2 / SQRT_PI, rel=1e-13)
    assert eval_kernel(k, 0.8, 0.1) == pytest.approx(float(oracles.rl_kernel(0.5, 0.8, 0.1)), rel=1e-12)


def test_time_independent_kernels_have_zero_derivative():
    assert eval_dF_dt(Identity(), 0.9, 0.2) == 0.0
    assert eval_dF_dt(Separable(lambda s: np.exp(s)), 0.9, 0.2) == 0.0


@pytest.mark.parametrize("s", [0.05, 0.3, 0.9])
def test_fbm_kernel_matches_direct_quadrature(s):
    k = FbmLiouville(0.7)
    assert eval_kernel(k, 1.0, s) == pytest.approx(float(oracles.fbm_kernel(0.7, 1.0, s)), rel=1e-10)
    r = FbmLiouville(0.3)
    assert eval_kernel(r, 1.0, s) == pytest.approx(float(oracles.fbm_kernel(0.3, 1.0, s, b_H=r.b_H)), rel=1e-10)


def test_singular_diagonal_is_refused():
    with pytest.raises(NonFinite):
        eval_kernel(FbmLiouville(0.3), 0.5, 0.5)


def test_cell_integrals():
    assert cell_integral(Identity(), 1.0, 0.2, 0.5) == pytest.approx(0.3, abs=1e-15)
    assert cell_integral(Constant(2.0), 1.0, 0.0, 1.0) == 2.0
    ref = float(oracles.fbm_cell_integral(0.7, 1.0, 0.9, 1.0))
    assert cell_integral(FbmLiouville(0.7), 1.0, 0.9, 1.0) == pytest.approx(ref, rel=1e-8)
    ref0 = float(oracles.fbm_cell_integral(0.7, 1.0, 0.0, 0.1))
    assert cell_integral(FbmLiouville(0.7), 1.0, 0.0, 0.1) == pytest.approx(ref0, rel=1e-8)


def test_cell_integral_domain():
    with pytest.raises(DomainError):
        cell_integral(Identity(), 0.5, 0.4, 0.6)


def test_covariances():
    assert covariance(Identity(), 0.7, 0.3) == pytest.approx(0.3)
    assert covariance(Separable(lambda s: s), 1.0, 1.0) == pytest.approx(1 / 3, rel=1e-12)
    for H in (0.3, 0.7):
        k = FbmLiouville(H)
        for t, s in [(0.3, 0.3), (0.8, 0.2), (1.0, 0.55)]:
            assert covariance(k, t, s) == pytest.approx(float(oracles.fbm_covariance(H, t, s)), rel=1e-8)


@pytest.mark.parametrize("t", [0.1, 0.2, 0.4])
def test_fbm_self_similarity(t):
    k = FbmLiouville(0.7)
    assert covariance(k, 2 * t, 2 * t) / covariance(k, t, t) == pytest.approx(2**1.4, rel=1e-6)


def test_phi():
    assert phi(Separable(lambda s: 1 + s), 0.5, 0.8) == 0.0
    # 2 / Gamma(0.75)^2 = 1.331871...
    assert phi(RiemannLiouville(0.75), 1.0, 1.0) == pytest.approx(2 / math.gamma(0.75) ** 2, rel=1e-9)
    assert 2 / math.gamma(0.75) ** 2 == pytest.approx(1.33187174, abs=1e-8)


def _graded_double_integral(f, s, t, m=20):
    """int_0^t du int_0^s dv f(u, v) for symmetric f with a kink on u = v.

    Square substitutions put the kink on quadrature edges.
    """
    x, w = np.polynomial.legendre.leggauss(m)
    x, w = (x + 1) / 2, w / 2
    total = 0.0
    for z, wz in zip(x, w):
        for y, wy in zip(x, w):
            u = s * z
            total += 2 * wz * wy * s * 2 * y * u * f(u, u - u * y**2)
            if t > s:
                uu, vv = s + (t - s) * z**2, s - s * y**2
                total += wz * wy * 2 * z * (t - s) * 2 * y * s * f(uu, vv)
    return total


def test_phi_double_integral_is_covariance():
    k = RiemannLiouville(0.75)
    for t, s in [(0.4, 0.4), (0.8, 0.5), (1.0, 0.25)]:
        val = _graded_double_integral(lambda u, v: phi(k, u, v), s, t)
        assert val == pytest.approx(covariance(k, t, s), rel=1e-4)


def test_validation_reports():
    g = TimeGrid(1.0, 16)
    rep = validate(Identity(), g)
    assert rep.ok
    rep = validate(RiemannLiouville(0.4, f1=lambda s: 1 + s, f2=lambda t: np.exp(t)), g)
    assert rep.A4_identities_hold and rep.theta_shift_invariant
    custom = Custom(lambda t, s: np.cos(t - s), lambda t, s: -np.sin(t - s))
    rep = validate(custom, g)
    assert not rep.inversion_data_present


def test_constructor_domains():
    with pytest.raises(DomainError):
        FbmLiouville(1.2)
    with pytest.raises(DomainError):
        RiemannLiouville(1.0)
    with pytest.raises(DomainError):
        Constant(0.0)
