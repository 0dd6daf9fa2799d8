import math

import numpy as np
import pytest

from fgauss import FbmLiouville, GridFunction, Identity, RiemannLiouville, RngConfig, Separable, TimeGrid, sample_brownian
from fgauss.errors import DomainError, NotReducible
from fgauss.martingale import (
    martingale_check,
    projected_square_integral,
    route_rms,
    route_rms_exact,
    sample_M,
    zeta1_reduce,
    zeta1_square_integral,
)
from fgauss.sampling import bf_integral_via_brownian
from fgauss.stats import loglog_slope

G = TimeGrid(1.0, 64)
SEED = RngConfig(20240611)


def test_zeta1_reductions():
    assert zeta1_reduce(Separable(lambda s: 1 + s), G).values.values == pytest.approx(1.0)
    assert zeta1_reduce(Identity(), G).values.values == pytest.approx(1.0)
    f1 = lambda s: 1 + s
    red = zeta1_reduce(RiemannLiouville(0.5, f1=f1), G)
    assert red.max_deviation <= 1e-4
    assert red.values.values == pytest.approx(math.gamma(0.5) * G.cell_average(f1), rel=1e-12)


def test_kernel_without_inversion_data_is_not_reducible():
    with pytest.raises(NotReducible):
        zeta1_reduce(FbmLiouville(0.3), G)


def test_identity_routes_are_brownian(rng):
    bm = sample_brownian(G, rng, 200)
    bf, red = sample_M(Identity(), bm, 40)
    assert bf == pytest.approx(bm.at(40), abs=1e-13)
    assert red == pytest.approx(bm.at(40), abs=1e-13)


def test_exact_route_rms_matches_sampling():
    spec = FbmLiouville(0.7)
    exact = route_rms_exact(spec, G)
    mc = route_rms(spec, G, SEED, 20_000)
    # the relative error of an RMS estimate from N paths is about 1 / sqrt(2N)
    assert mc == pytest.approx(exact, rel=4 / np.sqrt(2 * 20_000))


@pytest.mark.parametrize("spec", [RiemannLiouville(0.5), RiemannLiouville(0.25), FbmLiouville(0.7)])
def test_routes_converge_at_order_one_half(spec):
    # the order is exactly 1/2 asymptotically; fBm approaches it from below
    ns = [128, 256, 512]
    order = loglog_slope(ns, [route_rms_exact(spec, TimeGrid(1.0, n)) for n in ns])
    assert round(order, 3) >= 0.5


def test_separable_routes_converge_fast():
    ns = [32, 64, 128]
    order = loglog_slope(ns, [route_rms_exact(Separable(lambda s: 1 + s), TimeGrid(1.0, n)) for n in ns])
    assert order >= 1.9


def test_separable_integral_of_s():
    # int s dB^F = int s f(s) dB for F(t, s) = f(s)
    f = lambda s: 1 + s**2
    bm = sample_brownian(G, SEED, 500)
    zeta = GridFunction.from_function(G, lambda s: s)
    out = bf_integral_via_brownian(Separable(f), zeta, bm)
    assert out == pytest.approx(bm.values @ (G.cell_average(f) * zeta.values), rel=1e-12, abs=1e-14)


def test_square_integrals():
    # zeta1 = Gamma(1/2) for the unit fractional kernel, so int_0^s zeta1^2 = pi s
    spec = RiemannLiouville(0.5)
    assert zeta1_square_integral(spec, 0.5) == pytest.approx(math.pi * 0.5, rel=1e-12)
    assert projected_square_integral(spec, G, 32) == pytest.approx(math.pi * 0.5, rel=1e-12)


def test_identity_check():
    rep = martingale_check(Identity(), G, SEED, 100_000, [(0.5, 1.0)])
    cov = next(c for c in rep.cases if c["name"].startswith("E[M_s M_t]"))
    assert cov["reference"] == pytest.approx(0.5)
    assert rep.passed


def test_rl_check_and_orthogonality():
    rep = martingale_check(RiemannLiouville(0.5), G, SEED, 100_000, [(0.25, 0.5), (0.5, 1.0)])
    assert rep.passed
    tanh = [c for c in rep.cases if "tanh" in c["name"]]
    assert len(tanh) == 2 and all(abs(c["z"]) < 4 for c in tanh)
    assert rep.as_dict()["reduction_spread"] <= 1e-4


def test_bad_pairs():
    with pytest.raises(DomainError):
        martingale_check(Identity(), G, SEED, 100, [(0.5, 0.25)])
    with pytest.raises(DomainError):
        sample_M(Identity(), sample_brownian(G, SEED, 10), 0)
