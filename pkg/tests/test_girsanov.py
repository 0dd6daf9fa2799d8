import numpy as np
import pytest

from fgauss import FbmLiouville, GridFunction, Identity, RiemannLiouville, RngConfig, TimeGrid, sample_brownian
from fgauss import functionals as fn
from fgauss.errors import ConventionMismatch, DomainError
from fgauss.girsanov import (
    OPERATOR_ROUTE,
    ShiftDirection,
    girsanov_density,
    ibp_check,
    ibp_weight,
    quasi_invariance_check,
    reweighted_moments,
    stochastic_integral,
)
from fgauss.stats import MCEstimate

N = 100_000
SEED = 20240611  # suite-wide seed, also used by conftest
G32 = TimeGrid(1.0, 32)


@pytest.fixture(scope="module")
def bm():
    return sample_brownian(G32, RngConfig(SEED), N)


def test_zero_shift(bm):
    s = ShiftDirection.from_hdot(FbmLiouville(0.7), lambda t: 0 * t, G32)
    assert np.all(girsanov_density(s, bm) == 1.0)
    assert np.all(ibp_weight(s, bm) == 0.0)


def test_density_mean_and_change_of_mean(bm):
    s = ShiftDirection.from_hdot(Identity(), lambda t: 1 + 0 * t, G32)
    alpha = girsanov_density(s, bm)
    assert alpha == pytest.approx(np.exp(bm.at(32) - 0.5), rel=1e-12)
    assert abs(MCEstimate.from_samples(alpha, 1.0).zscore) < 3
    assert abs(MCEstimate.from_samples(alpha * bm.at(32), 1.0).zscore) < 3


def test_weight_moments(bm):
    s = ShiftDirection.from_hdot(RiemannLiouville(0.25), lambda t: np.sin(np.pi * t), G32)
    beta = ibp_weight(s, bm)
    assert abs(MCEstimate.from_samples(beta, 0.0).zscore) < 3
    assert abs(MCEstimate.from_samples(beta**2, s.norm_H**2).zscore) < 3


def test_operator_route_matches_brownian_route(bm):
    for spec in (Identity(), RiemannLiouville(0.25), FbmLiouville(0.7)):
        s = ShiftDirection.from_hdot(spec, lambda t: 1 + t, G32)
        a = stochastic_integral(s, bm)
        b = stochastic_integral(s, bm, OPERATOR_ROUTE)
        assert np.sqrt(np.mean((a - b) ** 2)) < 0.05 * np.std(a)


def test_linear_functional_matches_covariance_oracle(bm):
    spec = FbmLiouville(0.7)
    s = ShiftDirection.from_hdot(spec, lambda t: 1 + t, G32)
    G = fn.point(1.0)
    rep = quasi_invariance_check(spec, G, s, batch=bm)
    assert rep.passed
    # E[B^F_T alpha] = h^F(T) exactly
    weighted = G.evaluate(volterra_nodes(spec, bm), G32) * girsanov_density(s, bm)
    assert abs(MCEstimate.from_samples(weighted, s.hF.values[-1]).zscore) < 3
    rep = ibp_check(spec, fn.point(0.5), s, batch=bm)
    assert rep.lhs.mean == pytest.approx(s.hF.values[16])
    assert abs(rep.rhs.mean - s.hF.values[16]) < 3 * rep.rhs.stderr


def volterra_nodes(spec, bm):
    from fgauss import volterra_transform

    return volterra_transform(spec, bm).nodes


def test_square_ibp_is_centred(bm):
    spec = RiemannLiouville(0.5)
    s = ShiftDirection.from_hdot(spec, lambda t: np.cos(t), G32)
    rep = ibp_check(spec, fn.square(1.0), s, batch=bm)
    assert abs(rep.lhs.mean) < 3 * rep.lhs.stderr
    assert abs(rep.rhs.mean) < 3 * rep.rhs.stderr
    assert rep.passed


def test_cosine_quasi_invariance_fbm(bm):
    spec = FbmLiouville(0.7)
    s = ShiftDirection.from_hdot(spec, lambda t: 0.5 + 0 * t, G32)
    assert abs(quasi_invariance_check(spec, fn.cosine(0.5), s, batch=bm).z) < 4


def test_reweighted_process_keeps_its_law(bm):
    spec = FbmLiouville(0.7)
    s = ShiftDirection.from_hdot(spec, lambda t: 1 + 0 * t, G32)
    means, second, _ = reweighted_moments(spec, s, 0.5, [8, 32], batch=bm)
    assert all(abs(m.zscore) < 4 for m in means)
    assert all(abs(e.zscore) < 4 for e in second.values())


def test_shift_conventions(bm):
    with pytest.raises(DomainError):
        ShiftDirection.from_hdot(Identity(), np.sin)
    with pytest.raises(ConventionMismatch):
        ShiftDirection.from_hdot(Identity(), GridFunction.constant(G32, 1.0, "node"))
    other = ShiftDirection.from_hdot(Identity(), np.sin, TimeGrid(1.0, 16))
    with pytest.raises(ConventionMismatch):
        girsanov_density(other, bm)
