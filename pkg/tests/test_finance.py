import math

import mpmath as mp
import numpy as np
import pytest
from scipy.stats import norm

import oracles
from fgauss import (
    Constant,
    FbmLiouville,
    GridFunction,
    Identity,
    RiemannLiouville,
    RngConfig,
    TimeGrid,
    sample_fgaussian,
)
from fgauss.errors import DegenerateT0, DomainError, NonIntegrableReciprocal, VarianceBlowup
from fgauss.finance import (
    GreeksReport,
    MarketParams,
    PayoffSpec,
    bel_delta,
    bel_weight_rms,
    bismut_v0_delta,
    black_scholes_call,
    black_scholes_put,
    directional_derivative_v,
    fd_delta,
    gaussian_delta_oracle,
    lognormal_delta_oracle,
    malliavin_deriv_inv_v,
    malliavin_deriv_v,
    price_roughvol,
    reciprocal_energy_check,
    rough_variance_path,
)
from fgauss.stats import MCEstimate, loglog_slope

SEED = RngConfig(20240611)
G = TimeGrid(1.0, 64)



@pytest.mark.parametrize("case", oracles.BS_CASES)
def test_black_scholes_against_quadrature(case):
    p = MarketParams(*case)
    ref = float(oracles.lognormal_call_price(*case))
    assert black_scholes_call(p) == pytest.approx(ref, rel=1e-10, abs=1e-10)
    parity = black_scholes_call(p) - black_scholes_put(p) - (p.S0 - p.K * math.exp(-p.r * p.T))
    assert abs(parity) <= 1e-12 * max(p.S0, p.K)


def test_black_scholes_reference_value_and_limit():
    assert black_scholes_call(MarketParams(100, 100, 0.05, 0.2, 1.0)) == pytest.approx(10.4506, abs=1e-4)
    assert black_scholes_call(MarketParams(100, 100, 0.0, 1e-9, 1.0)) < 1e-6


def test_market_validation():
    with pytest.raises(DomainError):
        MarketParams(100, 100, 0.05, 0.0, 1.0)
    with pytest.raises(DomainError):
        MarketParams(-1, 100, 0.05, 0.2, 1.0)
    with pytest.raises(DomainError):
        PayoffSpec.call(float("nan"))


def test_payoffs():
    x = np.array([0.5, 1.0, 1.5])
    assert PayoffSpec.call(1.0)(x) == pytest.approx([0, 0, 0.5])
    assert PayoffSpec.put(1.0)(x) == pytest.approx([0.5, 0, 0])
    assert PayoffSpec.digital(1.0)(x) == pytest.approx([0, 0, 1])
    assert PayoffSpec.custom(lambda v: v**2)(x) == pytest.approx(x**2)


def test_delta_oracles_closed_forms():
    assert gaussian_delta_oracle(PayoffSpec.call(0.2), 0.0, 1.0) == pytest.approx(norm.cdf(-0.2), rel=1e-10)
    var = 0.5
    d1 = (math.log(1.0 / 1.0) + var) / math.sqrt(var)
    ref = math.exp(var / 2) * norm.cdf(d1)
    assert lognormal_delta_oracle(PayoffSpec.call(1.0), 1.0, var) == pytest.approx(ref, rel=1e-10)
    ident = PayoffSpec.custom(lambda v: v)
    assert lognormal_delta_oracle(ident, 1.0, 0.5) == pytest.approx(math.exp(0.25), rel=1e-10)


def test_rough_variance():
    fg = sample_fgaussian(Identity(), G, SEED, 10)[1]
    zero = type(fg)(G, fg.kind, np.zeros_like(fg.values), fg.provenance)
    assert np.all(rough_variance_path(Identity(), 1.0, zero).values.values == 1.0)
    est, clamped = price_roughvol(Identity(), PayoffSpec.custom(lambda v: v), 1.0, 1.0, G, SEED, 100_000)
    assert clamped == 0
    assert abs(est.with_reference(math.exp(0.5)).zscore) < 3
    spec = FbmLiouville(0.7)
    est, _ = price_roughvol(spec, PayoffSpec.custom(lambda v: v), 1.0, 0.5, G, SEED, 100_000)
    ref = math.exp(0.5 * float(oracles.fbm_covariance(0.7, 0.5, 0.5)))
    assert abs(est.with_reference(ref).zscore) < 3
    with pytest.raises(DomainError):
        price_roughvol(spec, PayoffSpec.call(1.0), 1.0, 0.501, G, SEED, 10)


def test_malliavin_derivatives():
    assert malliavin_deriv_v(Identity(), 2.0, 1.0, 0.3) == 2.0
    spec = RiemannLiouville(0.5)
    v = 1.7
    total = malliavin_deriv_v(spec, v, 1.0, 0.3) / v + v * malliavin_deriv_inv_v(spec, v, 1.0, 0.3)
    assert total == pytest.approx(0.0, abs=1e-15)
    fg = sample_fgaussian(spec, G, SEED, 50)[1]
    fd, an = directional_derivative_v(spec, 1.0, fg, GridFunction.from_function(G, np.cos), 40)
    assert fd == pytest.approx(an, rel=1e-4)
    with pytest.raises(DomainError):
        malliavin_deriv_v(spec, 1.0, 0.3, 0.5)


def test_fd_delta_exact_for_polynomials():
    z = np.random.default_rng(0).normal(size=1000)
    est, samples = fd_delta(lambda x: 3 * (x + z), 0.7, bump=0.3)
    assert np.allclose(samples, 3.0)
    est, samples = fd_delta(lambda x: (x + z) ** 2, 0.7, bump=0.3)
    assert samples == pytest.approx(2 * (0.7 + z), rel=1e-12)


@pytest.mark.parametrize("spec", [Identity(), FbmLiouville(0.7)])
def test_bel_linear_and_quadratic(spec):
    rep = bel_delta(spec, PayoffSpec.custom(lambda v: v), 0.0, G, SEED, 100_000, oracle=1.0)
    assert abs(rep.z_oracle) < 3
    rep = bel_delta(spec, PayoffSpec.custom(lambda v: v**2), 0.3, G, SEED, 100_000, oracle=0.6)
    assert abs(rep.z_oracle) < 3


def test_bel_call_against_oracle_and_fd():
    rep = bel_delta(Identity(), PayoffSpec.call(0.2), 0.0, G, SEED, 100_000, oracle="gaussian")
    assert rep.oracle == pytest.approx(norm.cdf(-0.2), rel=1e-9)
    assert abs(rep.z_oracle) < 3
    assert abs(rep.z_fd) < 3
    assert rep.per_path["estimator"].shape == (100_000,)


def test_bel_weight_gap_order_one_half():
    ns = [64, 128, 256]
    order = loglog_slope(ns, [bel_weight_rms(RiemannLiouville(0.5), TimeGrid(1.0, n)) for n in ns])
    assert round(order, 3) >= 0.5


def test_bel_degenerate_T0():
    from fgauss import Custom

    spec = Custom(lambda t, s: np.cos(2 * np.pi * s) * np.ones_like(t))
    with pytest.raises(DegenerateT0):
        bel_delta(spec, PayoffSpec.call(0.0), 0.0, G, SEED, 100)


@pytest.mark.parametrize("c", [1.0, 0.5])
def test_bismut_constant_kernel_identity_payoff(c):
    t = 0.5
    rep = bismut_v0_delta(Constant(c), PayoffSpec.custom(lambda v: v), 1.0, t, G, SEED, 100_000)
    assert rep.oracle == pytest.approx(math.exp(c**2 * t / 2), rel=1e-10)
    assert abs(rep.z_oracle) < 3
    assert rep.diagnostics["literal_factor"] == pytest.approx(t, rel=0.05)


def test_bismut_constant_payoff_has_zero_delta():
    rep = bismut_v0_delta(Identity(), PayoffSpec.custom(lambda v: 1.0 + 0 * v), 1.0, 1.0, G, SEED, 100_000)
    assert abs(rep.z_oracle) < 3


def test_bismut_call_lognormal_oracle():
    rep = bismut_v0_delta(Identity(), PayoffSpec.call(1.0), 1.0, 1.0, G, SEED, 100_000)
    assert rep.oracle == pytest.approx(math.exp(0.5) * norm.cdf(1.0), rel=1e-10)
    assert abs(rep.z_oracle) < 3


def test_bismut_singular_kernels_against_fd():
    rep = bismut_v0_delta(FbmLiouville(0.7), PayoffSpec.call(1.0), 1.0, 0.5, G, SEED, 100_000)
    assert abs(rep.z_fd) < 4
    assert rep.diagnostics["weight_covariance_ratio"] == pytest.approx(1.0, abs=0.01)


def test_reciprocal_integrability():
    assert np.isfinite(reciprocal_energy_check(RiemannLiouville(0.25), 1.0)[-1])
    with pytest.raises(NonIntegrableReciprocal):
        reciprocal_energy_check(RiemannLiouville(0.5), 1.0)


def test_report_refuses_zero_variance():
    with pytest.raises(VarianceBlowup):
        GreeksReport("x", MCEstimate(1.0, 0.0, 10))


def test_bs_oracle_itself_is_sound():
    # the quadrature oracle reproduces the forward: E[S_T] discounted = S0
    S0, r, s, T = 100, 0.05, 0.2, 1.0
    forward = mp.exp(-r * T) * mp.quad(
        lambda z: S0 * mp.exp((r - s**2 / 2) * T + s * mp.sqrt(T) * z) * mp.npdf(z), [-mp.inf, mp.inf]
    )
    assert float(forward) == pytest.approx(S0, rel=1e-15)
