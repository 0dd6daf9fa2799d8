import numpy as np
import pytest

from fgauss import (
    Constant,
    FbmLiouville,
    Identity,
    RiemannLiouville,
    RngConfig,
    Separable,
    TimeGrid,
    sample_fgaussian,
)
from fgauss import functionals as fn
from fgauss.errors import DomainError, UnsupportedKernel
from fgauss.grid_ops import apply, build_KF_star
from fgauss.stats import MCEstimate, loglog_slope

G = TimeGrid(1.0, 32)
SEED = RngConfig(20240611)


def nodes_with(value_at, n=32):
    x = np.zeros((1, n + 1))
    for i, v in value_at.items():
        x[0, i] = v
    return x


def test_evaluation():
    assert fn.point(1.0).evaluate(nodes_with({32: 0.42}), G)[0] == pytest.approx(0.42)
    assert fn.product(0.25, 0.5).evaluate(nodes_with({8: 2.0, 16: -1.5}), G)[0] == pytest.approx(-3.0)
    # int_0^1 s ds by the trapezoid rule is exact for a linear path
    assert fn.l2_integral().evaluate(G.nodes[None, :], G)[0] == pytest.approx(0.5, abs=1e-15)


def test_partials_match_finite_differences():
    for G_ in (fn.cosine(0.5), fn.product(0.25, 1.0), fn.smooth_bump(0.5, 1.0), fn.arctan_sum((0.25, 0.5, 1.0))):
        assert G_.check_partials() < 1e-5


def test_damped_gradient_norms():
    x = np.zeros((1, 33))
    assert fn.damped_grad_norm(Identity(), fn.point(0.25), x, G)[0] == pytest.approx(0.25)
    f = lambda s: 1 + s
    # int_0^1 (1 + s)^2 ds = 7/3
    assert fn.damped_grad_norm(Separable(f), fn.point(1.0), x, G)[0] == pytest.approx(7 / 3, rel=1e-12)
    two = fn.linear((0.25, 0.75), (1.0, 1.0))
    assert fn.damped_grad_norm(Identity(), two, x, G)[0] == pytest.approx(4 * 0.25 + 0.5)


def test_ou_gradient_norms():
    x = np.zeros((1, 33))
    assert fn.ou_grad_norm(fn.point(0.5), x, G)[0] == pytest.approx(0.5)
    assert fn.ou_grad_norm(fn.linear((0.25, 0.75), (1.0, 1.0)), x, G)[0] == pytest.approx(3 * 0.25 + 0.75)
    const = fn.linear((0.5,), (0.0,))
    assert fn.ou_grad_norm(const, x, G)[0] == 0.0


def test_l2_gradients():
    path = np.sin(3 * G.nodes)[None, :]
    assert np.allclose(fn.l2_grad(fn.l2_integral(), path, G).values, 1.0)
    sq = fn.l2_grad(fn.l2_integral("square"), path, G).values
    assert np.allclose(sq, 2 * fn.l2_integral().evaluate(path, G)[0])
    sin_in = fn.CylinderFunctionalL2(
        lambda y: y[..., 0], lambda y: np.ones_like(y), [lambda s, x: np.sin(x)], [lambda s, x: np.cos(x)]
    )
    grad = fn.l2_grad(sin_in, path, G).values[0]
    mid = 0.5 * (np.cos(path[0, 1:]) + np.cos(path[0, :-1]))
    assert grad == pytest.approx(mid)


def test_dirichlet_energies():
    e = fn.dirichlet_energy("damped", Identity(), fn.point(1.0), G, SEED, 1000)
    assert e.mean == pytest.approx(1.0) and e.stderr == 0.0
    e = fn.dirichlet_energy("ou", Identity(), fn.square(1.0), G, SEED, 100_000)
    assert abs(e.with_reference(4.0).zscore) < 3
    e = fn.dirichlet_energy("l2", Identity(), fn.l2_integral(), G, SEED, 1000)
    assert e.mean == pytest.approx(1.0)


def test_entropy():
    assert fn.entropy(np.full(100, 3.0)).mean == 0.0
    assert fn.entropy([2.0, 2.0]).mean == 0.0
    sigma2 = 0.25
    x = np.random.default_rng(3).normal(scale=np.sqrt(sigma2), size=200_000)
    est = fn.entropy(np.exp(x))
    ref = sigma2 / 2 * np.exp(sigma2 / 2)
    assert abs(est.mean - ref) < 3 * est.stderr
    with pytest.raises(DomainError):
        fn.entropy([-1.0, 1.0])


def test_lsi_constants():
    assert fn.lsi_constants("damped", Identity()) == {"C": 2.0}
    assert fn.lsi_constants("l2", Constant(2.0))["C"] == pytest.approx(2 * 4 * 0.5)
    ou = fn.lsi_constants("ou", Identity(), delta=1.0)
    assert ou == {"C_printed": 4.0, "C_squared": 4.0}
    with pytest.raises(UnsupportedKernel):
        fn.lsi_constants("ou", RiemannLiouville(0.5))


def test_lsi_truncated_exponential_identity():
    rep = fn.lsi_check("damped", Identity(), fn.exp_truncated(1.0, 0.5), G, SEED, 100_000)
    assert rep.passed


def test_lsi_constant_functional_is_equality():
    const = fn.linear((0.5,), (0.0,))
    shifted = fn.CylinderFunctional((0.5,), lambda x: 1.0 + 0 * x[..., 0], lambda x: 0 * x, "one")
    fg = sample_fgaussian(Identity(), G, SEED, 1000)[1]
    for kind in ("damped", "ou"):
        for H in (const, shifted):
            e = fn.energy_samples(kind, Identity(), H, fg.nodes, G)
            assert np.all(e == 0)
    assert fn.entropy(shifted.evaluate(fg.nodes, G) ** 2).mean == 0.0


def test_lsi_l2_tanh_fbm():
    rep = fn.lsi_check("l2", FbmLiouville(0.7), fn.l2_tanh_mean(), G, SEED, 100_000)
    assert rep.passed


def test_clark_ocone_simple_cases():
    H = fn.clark_ocone_linear(Identity(), [1.0], [1.0], G)
    assert H.values == pytest.approx(1.0, abs=1e-14)
    H = fn.clark_ocone_linear(Separable(lambda s: 1 + s), [1.0], [1.0], G)
    assert H.values == pytest.approx(1.0, abs=1e-13)


def test_clark_ocone_variance_identity():
    spec = RiemannLiouville(0.25)
    a, times = [1.0, -0.5], [0.5, 1.0]
    H = fn.clark_ocone_linear(spec, a, times, G)
    fg = sample_fgaussian(spec, G, SEED, 100_000)[1]
    Gv = fn.linear(times, a).evaluate(fg.nodes, G)
    ref = apply(build_KF_star(spec, G), H).l2_norm() ** 2
    assert abs(MCEstimate.from_samples(Gv**2, ref).zscore) < 3


def test_clark_ocone_residual_decays():
    spec = FbmLiouville(0.7)
    ns = [32, 64, 128]
    errs = []
    for n in ns:
        r, _ = fn.clark_ocone_residual(spec, [1.0, -0.5], [0.5, 1.0], TimeGrid(1.0, n), SEED, 2000)
        errs.append(np.sqrt(np.mean(r**2)))
    assert loglog_slope(ns, errs) >= 0.5


def test_functional_domain_errors():
    with pytest.raises(DomainError):
        fn.CylinderFunctional((0.5, 0.25), lambda x: x[..., 0], lambda x: x)
    with pytest.raises(DomainError):
        fn.product(0.5, 0.51).snap(TimeGrid(1.0, 4))
    with pytest.raises(DomainError):
        fn.energy_samples("nope", Identity(), fn.point(1.0), np.zeros((1, 33)), G)
    with pytest.raises(DomainError):
        fn.l2_integral("cube")
