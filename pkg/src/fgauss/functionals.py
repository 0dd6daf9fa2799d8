"""Cylinder functionals, their gradients, Dirichlet energies, entropy and log-Sobolev checks.

Three gradient notions are implemented for a functional
G(gamma) = g(gamma(t_1), ..., gamma(t_m)) with a = grad g:

* damped: squared norm  int_0^T (sum_i a_i F(t_i, s) 1{s <= t_i})^2 ds,
* OU:     squared norm  sum_ij a_i a_j (t_i ^ t_j),
* L2:     for integral functionals, DG(t) = sum_i d_i g * d/dx g_i(t, gamma_t).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, UnsupportedKernel
from .grid import CELL, GridFunction, TimeGrid
from .grid_ops import apply, build_KF_star, build_KF_star_inv, build_RF_matrix
from .kernels import KernelSpec, dF_dt_l2_norm_sq, l2_norm_sq, sup_diag
from .sampling import FGAUSSIAN, PathBatch, RngConfig, bf_integral, sample_fgaussian
from .stats import MCEstimate, zscore

DAMPED, OU, L2 = "damped", "ou", "l2"
KINDS = (DAMPED, OU, L2)

# ------------------------------------------------------------------ classes


@dataclass(frozen=True)
class CylinderFunctional:
    """G(gamma) = g(gamma(t_1), ..., gamma(t_m)).

    ``g`` maps an array ``(..., m)`` to ``(...)`` and ``partials`` maps it to
    ``(..., m)``.  Times are snapped to grid nodes when evaluated.
    """

    times: tuple
    g: Callable
    partials: Callable
    name: str = ""
    bound: Optional[float] = None
    truncation: Optional[float] = None

    def __post_init__(self):
        t = tuple(float(x) for x in np.atleast_1d(self.times))
        if not t:
            raise DomainError("a cylinder functional needs at least one time")
        if any(x <= 0 for x in t) or any(b <= a for a, b in zip(t, t[1:])):
            raise DomainError("times must be increasing and positive")
        object.__setattr__(self, "times", t)

    @property
    def m(self):
        return len(self.times)

    def snap(self, grid: TimeGrid):
        """Node indices of the times and the snapping offsets."""
        pairs = [grid.snap(t) for t in self.times]
        idx = np.array([p[0] for p in pairs])
        if np.any(idx == 0) or np.any(np.diff(idx) <= 0):
            raise DomainError(f"times {self.times} collapse on a grid with n={grid.n}")
        return idx, np.array([p[1] for p in pairs])

    def point_values(self, nodes, grid):
        return np.asarray(nodes)[..., self.snap(grid)[0]]

    def evaluate(self, nodes, grid):
        return np.asarray(self.g(self.point_values(nodes, grid)), float)

    def gradient(self, nodes, grid):
        return np.asarray(self.partials(self.point_values(nodes, grid)), float)

    def check_partials(self, seed=0, points=10, rtol=1e-5, scale=1.0):
        """Compare ``partials`` with central differences at random points.

        Returns the largest relative deviation (raises DomainError above ``rtol``).
        """
        rng = np.random.default_rng(seed)
        x = rng.normal(scale=scale, size=(points, self.m))
        worst = 0.0
        for i in range(self.m):
            e = np.zeros(self.m)
            h = 1e-6 * np.maximum(1.0, np.abs(x[:, i]))
            e[i] = 1.0
            fd = (self.g(x + h[:, None] * e) - self.g(x - h[:, None] * e)) / (2 * h)
            an = np.asarray(self.partials(x))[:, i]
            dev = np.abs(fd - an) / np.maximum(np.abs(an), 1e-3)
            worst = max(worst, float(dev.max()))
        if worst > rtol:
            raise DomainError(f"partials of {self.name or 'G'} disagree with finite differences ({worst:.2e})")
        return worst


@dataclass(frozen=True)
class CylinderFunctionalL2:
    """G(gamma) = g(int_0^T g_1(s, gamma_s) ds, ..., int_0^T g_m(s, gamma_s) ds).

    Inner integrals use the trapezoid rule on the nodes.
    """

    g: Callable
    partials: Callable
    integrands: Sequence[Callable]
    integrand_partials: Sequence[Callable]
    name: str = ""

    def __post_init__(self):
        if len(self.integrands) < 1 or len(self.integrands) != len(self.integrand_partials):
            raise DomainError("need matching integrands and their x-partials")

    @property
    def m(self):
        return len(self.integrands)

    def inner(self, nodes, grid):
        nodes = np.asarray(nodes, float)
        t = grid.nodes
        w = np.full(grid.n + 1, grid.dt)
        w[[0, -1]] = grid.dt / 2
        return np.stack([np.asarray(gi(t, nodes), float) @ w for gi in self.integrands], axis=-1)

    def evaluate(self, nodes, grid):
        return np.asarray(self.g(self.inner(nodes, grid)), float)

    def gradient(self, nodes, grid) -> GridFunction:
        """Cell-valued L2 gradient (node values averaged over each cell)."""
        nodes = np.asarray(nodes, float)
        outer = np.asarray(self.partials(self.inner(nodes, grid)), float)
        t = grid.nodes
        node_grad = sum(
            outer[..., i, None] * np.asarray(dgi(t, nodes), float)
            for i, dgi in enumerate(self.integrand_partials)
        )
        return GridFunction(grid, 0.5 * (node_grad[..., 1:] + node_grad[..., :-1]), CELL)


# ------------------------------------------------------------- constructors


def linear(times, coefficients, name=None):
    a = np.asarray(coefficients, float)
    return CylinderFunctional(
        times,
        lambda x: x @ a,
        lambda x: np.broadcast_to(a, np.shape(x)),
        name or "linear",
    )


def point(t):
    return linear((t,), (1.0,), f"point({t:g})")


def square(t):
    return CylinderFunctional((t,), lambda x: x[..., 0] ** 2, lambda x: 2 * x, f"square({t:g})")


def cosine(t):
    return CylinderFunctional(
        (t,), lambda x: np.cos(x[..., 0]), lambda x: -np.sin(x), f"cos({t:g})", bound=1.0
    )


def product(t1, t2):
    return CylinderFunctional(
        (t1, t2), lambda x: x[..., 0] * x[..., 1], lambda x: x[..., ::-1], f"product({t1:g},{t2:g})"
    )


def exp_truncated(t, lam, level=5.0):
    """exp(lam * clip(x, -level, level) / 2): a bounded Lipschitz exponential."""

    def g(x):
        return np.exp(lam * np.clip(x[..., 0], -level, level) / 2)

    def dg(x):
        inside = np.abs(x) < level
        return np.where(inside, lam / 2 * np.exp(lam * np.clip(x, -level, level) / 2), 0.0)

    return CylinderFunctional((t,), g, dg, f"exp_trunc({t:g},{lam:g})", truncation=level)


def smooth_bump(t1, t2):
    """1 + 0.5 sin(x1) cos(x2): bounded, positive, two times."""

    def g(x):
        return 1.0 + 0.5 * np.sin(x[..., 0]) * np.cos(x[..., 1])

    def dg(x):
        return np.stack(
            [0.5 * np.cos(x[..., 0]) * np.cos(x[..., 1]), -0.5 * np.sin(x[..., 0]) * np.sin(x[..., 1])],
            axis=-1,
        )

    return CylinderFunctional((t1, t2), g, dg, f"bump({t1:g},{t2:g})", bound=1.5)


def arctan_sum(times):
    def g(x):
        return 1.0 + np.arctan(x.sum(axis=-1))

    def dg(x):
        return np.broadcast_to((1.0 / (1.0 + x.sum(axis=-1) ** 2))[..., None], np.shape(x))

    return CylinderFunctional(tuple(times), g, dg, "arctan_sum", bound=1 + np.pi / 2)


def l2_tanh_mean():
    """tanh(int_0^T gamma_s ds)."""
    return CylinderFunctionalL2(
        lambda y: np.tanh(y[..., 0]),
        lambda y: 1.0 / np.cosh(y) ** 2,
        [lambda s, x: x],
        [lambda s, x: np.ones_like(x)],
        "l2_tanh_mean",
    )


def l2_integral(outer="identity"):
    """g(int gamma) with g the identity or the square."""
    if outer == "identity":
        g, dg = (lambda y: y[..., 0]), (lambda y: np.ones_like(y))
    elif outer == "square":
        g, dg = (lambda y: y[..., 0] ** 2), (lambda y: 2 * y)
    else:
        raise DomainError(f"unknown outer function {outer!r}")
    return CylinderFunctionalL2(g, dg, [lambda s, x: x], [lambda s, x: np.ones_like(x)], f"l2_{outer}")


def l2_sin_mean(shift=1.0):
    """shift + sin(int_0^T sin(gamma_s) ds)."""
    return CylinderFunctionalL2(
        lambda y: shift + np.sin(y[..., 0]),
        lambda y: np.cos(y),
        [lambda s, x: np.sin(x)],
        [lambda s, x: np.cos(x)],
        "l2_sin_mean",
    )


def l2_two_integrals():
    """1 + 0.5 tanh(y1) cos(y2) with y1 = int gamma, y2 = int s * gamma."""
    return CylinderFunctionalL2(
        lambda y: 1.0 + 0.5 * np.tanh(y[..., 0]) * np.cos(y[..., 1]),
        lambda y: np.stack(
            [0.5 / np.cosh(y[..., 0]) ** 2 * np.cos(y[..., 1]), -0.5 * np.tanh(y[..., 0]) * np.sin(y[..., 1])],
            axis=-1,
        ),
        [lambda s, x: x, lambda s, x: s * x],
        [lambda s, x: np.ones_like(x), lambda s, x: s * np.ones_like(x)],
        "l2_two_integrals",
    )


def l2_exp_truncated(lam=0.5, level=5.0):
    """exp(lam * clip(int gamma) / 2)."""

    def g(y):
        return np.exp(lam * np.clip(y[..., 0], -level, level) / 2)

    def dg(y):
        return np.where(np.abs(y) < level, lam / 2 * np.exp(lam * np.clip(y, -level, level) / 2), 0.0)

    return CylinderFunctionalL2(g, dg, [lambda s, x: x], [lambda s, x: np.ones_like(x)], "l2_exp_trunc")


# ---------------------------------------------------------------- gradients


def _kernel_rows(spec: KernelSpec, grid: TimeGrid, idx):
    """Gram matrix R_F(t_i, t_k) restricted to the snapped indices."""
    R = build_RF_matrix(spec, grid)
    return R[np.ix_(idx, idx)]


def damped_grad_norm(spec: KernelSpec, G: CylinderFunctional, nodes, grid: TimeGrid):
    """Squared damped-gradient norm per path: a^T [R_F(t_i, t_k)] a."""
    idx, _ = G.snap(grid)
    a = G.gradient(nodes, grid)
    R = _kernel_rows(spec, grid, idx)
    return np.einsum("...i,ij,...j->...", a, R, a)


def ou_grad_norm(G: CylinderFunctional, nodes, grid: TimeGrid):
    """Squared OU-gradient norm per path: a^T [t_i ^ t_k] a."""
    idx, _ = G.snap(grid)
    t = grid.nodes[idx]
    a = G.gradient(nodes, grid)
    return np.einsum("...i,ij,...j->...", a, np.minimum.outer(t, t), a)


def l2_grad(GL2: CylinderFunctionalL2, nodes, grid: TimeGrid) -> GridFunction:
    return GL2.gradient(nodes, grid)


def l2_grad_norm(GL2: CylinderFunctionalL2, nodes, grid: TimeGrid):
    return GL2.gradient(nodes, grid).l2_norm() ** 2


def energy_samples(kind, spec, G, nodes, grid):
    if kind == DAMPED:
        return damped_grad_norm(spec, G, nodes, grid)
    if kind == OU:
        return ou_grad_norm(G, nodes, grid)
    if kind == L2:
        return l2_grad_norm(G, nodes, grid)
    raise DomainError(f"unknown energy kind {kind!r}")


def _paths(spec, grid, rng, n_paths, paths):
    if paths is not None:
        if paths.kind != FGAUSSIAN:
            raise DomainError("expected an F-Gaussian batch")
        return paths
    return sample_fgaussian(spec, grid, rng, n_paths)[1]


def dirichlet_energy(kind, spec, G, grid, rng=None, n_paths=10_000, paths: PathBatch = None):
    """Monte Carlo estimate of the Dirichlet energy of the requested kind."""
    fg = _paths(spec, grid, rng, n_paths, paths)
    est = MCEstimate.from_samples(energy_samples(kind, spec, G, fg.nodes, grid))
    return est.check_variance(f"{kind} energy")


# ---------------------------------------------------------------- entropy


def entropy(samples) -> MCEstimate:
    """Plug-in estimate of Ent(Y) = E[Y log Y] - E[Y] log E[Y] for samples of Y = G^2.

    The standard error uses the delta method: the influence of one sample is
    Y log Y - (log E[Y] + 1) Y.  Constant samples give 0 with zero error.
    """
    y, infl = _entropy_influence(samples)
    est = float(np.mean(y * _safe_log(y)) - y.mean() * _safe_log(y.mean()))
    if np.ptp(y) == 0:
        est = 0.0
    return MCEstimate(est, float(infl.std(ddof=1) / np.sqrt(y.size)), int(y.size))


def _safe_log(y):
    return np.log(np.maximum(y, 1e-300))


def _entropy_influence(samples):
    y = np.asarray(samples, float).ravel()
    if y.size < 2:
        raise DomainError("entropy needs at least two samples")
    if np.any(y < 0):
        raise DomainError("entropy samples must be non-negative")
    m = y.mean()
    infl = y * _safe_log(y) - (_safe_log(m) + 1.0) * y
    return y, infl


# ---------------------------------------------------------------- LSI


@dataclass(frozen=True)
class LSIReport:
    kind: str
    functional: str
    kernel: str
    entropy: MCEstimate
    energy: MCEstimate
    constants: dict
    margins: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(m["pass"] for m in self.margins.values())

    def as_dict(self):
        return {
            "kind": self.kind,
            "functional": self.functional,
            "kernel": self.kernel,
            "ent": self.entropy.as_dict(),
            "energy": self.energy.as_dict(),
            "constants": dict(self.constants),
            "margins": {k: dict(v) for k, v in self.margins.items()},
            "pass": self.passed,
        }


def lsi_constants(kind, spec: KernelSpec, delta=1.0):
    """Constants of the three log-Sobolev inequalities.

    For the OU kind both the printed constant and the variant with squared
    factors (which follows from the (x+y)^2 <= (1+d)x^2 + (1+1/d)y^2 step)
    are returned.
    """
    if kind == DAMPED:
        return {"C": 2.0}
    if kind == L2:
        return {"C": 2.0 * l2_norm_sq(spec)}
    if kind != OU:
        raise DomainError(f"unknown LSI kind {kind!r}")
    if delta <= 0:
        raise DomainError("delta must be positive")
    sup = sup_diag(spec)
    d2 = dF_dt_l2_norm_sq(spec)
    if not (np.isfinite(sup) and np.isfinite(d2)):
        raise UnsupportedKernel(
            f"{spec.variant}: the OU inequality needs finite sup F(t,t) and ||dF/dt||_L2"
        )
    return {
        "C_printed": 2 * (1 + delta) * sup + 2 * (1 + delta) / delta * np.sqrt(d2),
        "C_squared": 2 * (1 + delta) * sup**2 + 2 * (1 + delta) / delta * d2,
    }


def lsi_check(kind, spec, G, grid, rng=None, n_paths=100_000, delta=1.0, paths=None, z_gate=3.0):
    """Estimate Ent(G^2) and C * energy on common paths and gate the margin.

    A case passes if C * energy - Ent >= -z_gate * stderr(margin).  The
    margin's error accounts for the correlation of both estimators.
    """
    constants = lsi_constants(kind, spec, delta)
    fg = _paths(spec, grid, rng, n_paths, paths)
    gv = G.evaluate(fg.nodes, grid)
    e = energy_samples(kind, spec, G, fg.nodes, grid)
    y, infl = _entropy_influence(gv**2)
    ent = entropy(y)
    energy = MCEstimate.from_samples(e).check_variance(f"{kind} energy")
    n = y.size
    margins = {}
    for name, C in constants.items():
        diff = C * e - infl
        se = float(diff.std(ddof=1) / np.sqrt(n))
        margin = C * energy.mean - ent.mean
        z = zscore(margin, se)
        margins[name] = {"C": float(C), "margin": float(margin), "stderr": se, "z": z, "pass": bool(z >= -z_gate)}
    return LSIReport(kind, G.name, spec.variant, ent, energy, constants, margins)


# -------------------------------------------------------------- Clark-Ocone


def clark_ocone_linear(spec: KernelSpec, a, times, grid: TimeGrid, route="auto") -> GridFunction:
    """Integrand H of G = sum_i a_i gamma(t_i) against B^F.

    H = (K_F*)^-1 [sum_i a_i F(t_i, .) 1{. <= t_i}], where the bracket is
    formed as K_F* applied to the indicator sum (cell averages of F(t_i, .)).
    """
    G = linear(times, a)
    idx, _ = G.snap(grid)
    ind = np.zeros(grid.n)
    for ai, i in zip(np.asarray(a, float), idx):
        ind[:i] += ai
    target = apply(build_KF_star(spec, grid), GridFunction(grid, ind, CELL))
    return apply(build_KF_star_inv(spec, grid, route), target)


def clark_ocone_residual(spec, a, times, grid, rng: RngConfig, n_paths, route="auto"):
    """Per-path residual G - E[G] - int H dB^F for a linear G (E[G] = 0)."""
    H = clark_ocone_linear(spec, a, times, grid, route)
    fg = sample_fgaussian(spec, grid, rng, n_paths)[1]
    G = linear(times, a).evaluate(fg.nodes, grid)
    return G - bf_integral(H, fg), H
