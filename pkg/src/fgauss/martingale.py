"""The martingale M(t) = int_0^t Theta(t, s) / zeta2(s) dB^F_s.

The integrand reduces on the driving noise to a t-independent function
zeta1, so M(t) = int_0^t zeta1 dB.  Both routes are computed; the checks use
the B^F route and compare its covariance with the grid-projected
integral of zeta1^2.

For fractional-integral kernels the inversion data are rescaled so that
Theta(t, s) = (t - s)**(-alpha) without the 1/Gamma(1 - alpha) factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gamma

from . import quadrature as quad
from .errors import DomainError, NonIntegrable, NotReducible
from .grid import CELL, GridFunction, TimeGrid
from .grid_ops import build_KF, causal_cell_integrals, cell_means
from .kernels import FbmLiouville, KernelSpec, RiemannLiouville, call_gap, gap_aware
from .sampling import BROWNIAN, PathBatch, RngConfig, sample_brownian, volterra_transform
from .stats import MCEstimate

SWEEP_RTOL = 1e-4


def martingale_data(spec: KernelSpec):
    """Inversion data with the fractional normalisation moved out of Theta."""
    data = spec.inversion_data
    if data is None:
        raise NotReducible(f"{spec.variant} has no inversion data")
    if isinstance(spec, RiemannLiouville):
        return data.rescaled(gamma(1.0 - spec.alpha))
    if isinstance(spec, FbmLiouville) and spec.H > 0.5:
        return data.rescaled(gamma(1.5 - spec.H))
    return data


def _reduction(spec, data, s, t):
    """F(s,s) Theta(t,s)/zeta2(s) + int_s^t dF(u,s)/du Theta(t,u)/zeta2(u) du."""
    diag = float(spec.diag(np.array(s)))
    head = 0.0
    if diag != 0.0:
        head = diag * float(call_gap(data.Theta, np.array(t), np.array(s), np.array(t - s))) / float(
            data.zeta2(np.array(s))
        )
    if spec.dF_dt_vanishes:
        return head
    left = None if spec.diag_power is None else spec.diag_power - 1.0
    body = quad.integrate(
        lambda u, dl, dr: spec._dF_dt(u, np.full_like(u, s), dl)
        * call_gap(data.Theta, np.full_like(u, t), u, dr)
        / np.asarray(data.zeta2(u), float),
        s,
        t,
        left,
        data.theta_power,
        rtol=1e-9,
        gaps=True,
    )
    return head + body


@dataclass(frozen=True)
class Zeta1Reduction:
    values: GridFunction  # cell averages of the analytic zeta1
    sweep_times: tuple
    max_deviation: float  # largest relative spread across the t-sweep
    max_mismatch: float  # largest relative gap to the analytic zeta1


def zeta1_reduce(spec: KernelSpec, grid: TimeGrid, sweep=(0.5, 0.625, 0.75, 0.875, 1.0), samples=8):
    """Evaluate the reduction for several t and check that it does not depend on t.

    Raises
    ------
    NotReducible
        If the values spread by more than 1e-4 relative across the sweep.
    """
    data = martingale_data(spec)
    ts = tuple(float(f) * grid.T for f in sweep)
    s_pts = np.linspace(0.0, min(ts), samples + 2)[1:-1]
    table = np.array([[_reduction(spec, data, s, t) for s in s_pts] for t in ts])
    scale = np.max(np.abs(table), axis=0)
    if np.any(scale == 0):
        raise NotReducible("the reduction vanishes at some s")
    spread = float(np.max(np.ptp(table, axis=0) / scale))
    mismatch = float(np.max(np.abs(table[-1] - np.asarray(data.zeta1(s_pts), float)) / scale))
    if spread > SWEEP_RTOL:
        raise NotReducible(f"reduction depends on t (relative spread {spread:.2e})")
    if mismatch > SWEEP_RTOL:
        raise NotReducible(f"reduction disagrees with the declared zeta1 ({mismatch:.2e})")
    z1 = GridFunction(grid, cell_means(data.zeta1, grid, data.zeta1_origin), CELL)
    return Zeta1Reduction(z1, ts, spread, mismatch)


def _integrand_rows(spec, data, grid):
    """Row r: cell integrals of Theta(t_{r+1}, s)/zeta2(s) divided by dt."""
    th, z2 = data.Theta, data.zeta2

    @gap_aware
    def fn(t, s, d=None):
        return call_gap(th, t, s, d) / np.asarray(z2(s), float)

    if data.theta_power is not None and data.theta_power <= -1:
        raise NonIntegrable("Theta(t, s) is not integrable at s = t")
    origin = None if data.zeta2_origin is None else -data.zeta2_origin
    return causal_cell_integrals(fn, grid, data.theta_power, origin) / grid.dt


def sample_M(spec: KernelSpec, bm: PathBatch, t_index: int):
    """M(t_i) per path by the B^F route and by the reduced route.

    Returns ``(bf_route, reduced_route)``.
    """
    if bm.kind != BROWNIAN:
        raise DomainError("sample_M needs a Brownian batch")
    grid = bm.grid
    if not 1 <= t_index <= grid.n:
        raise DomainError("t_index must lie in 1..n")
    data = martingale_data(spec)
    psi = _integrand_rows(spec, data, grid)[t_index - 1]
    fg = volterra_transform(spec, bm)
    bf = fg.increments @ psi
    z1 = cell_means(data.zeta1, grid, data.zeta1_origin)
    reduced = bm.values[:, :t_index] @ z1[:t_index]
    return bf, reduced


def projected_square_integral(spec: KernelSpec, grid: TimeGrid, i: int):
    """sum_{j < i} zeta1_j^2 dt with zeta1_j the cell averages.

    This is the variance of M(t_i) when the driving noise is resolved only
    through cell increments.
    """
    data = martingale_data(spec)
    z1 = cell_means(data.zeta1, grid, data.zeta1_origin)[:i]
    return float(np.sum(z1**2) * grid.dt)


def zeta1_square_integral(spec: KernelSpec, s):
    """int_0^s zeta1(u)^2 du."""
    data = martingale_data(spec)
    return quad.integrate(
        lambda u: np.asarray(data.zeta1(u), float) ** 2,
        0.0,
        s,
        None if data.zeta1_origin is None else 2 * data.zeta1_origin,
        None,
    )


@dataclass(frozen=True)
class MartingaleReport:
    kernel: str
    cases: tuple  # dicts with name, estimate, reference, z, pass
    reduction: Zeta1Reduction

    @property
    def passed(self):
        return all(c["pass"] for c in self.cases)

    def as_dict(self):
        return {
            "kernel": self.kernel,
            "reduction_spread": self.reduction.max_deviation,
            "reduction_mismatch": self.reduction.max_mismatch,
            "cases": [dict(c) for c in self.cases],
            "pass": self.passed,
        }


def martingale_check(spec, grid, rng: RngConfig, n_paths, pairs, z_gate=3.0, batch=None):
    """Covariance and orthogonality checks of M on the B^F route.

    Second moments are compared with the grid-projected integral of zeta1^2
    (see :func:`projected_square_integral`); the continuous integral is
    reported alongside.
    """
    red = zeta1_reduce(spec, grid)
    bm = batch if batch is not None else sample_brownian(grid, rng, n_paths)
    cache = {}

    def M(i):
        if i not in cache:
            cache[i] = sample_M(spec, bm, i)[0]
        return cache[i]

    cases = []
    seen = set()

    def add(name, est, continuous=None):
        est.check_variance(name, ratio=0.5)
        z = est.zscore
        case = {
            "name": name,
            "estimate": est.mean,
            "reference": est.reference,
            "stderr": est.stderr,
            "z": z,
            "pass": bool(abs(z) <= z_gate),
        }
        if continuous is not None:
            case["continuous_reference"] = continuous
        cases.append(case)

    for s, t in pairs:
        if not 0 < s < t <= grid.T:
            raise DomainError(f"pair ({s}, {t}) must satisfy 0 < s < t <= T")
        i, _ = grid.snap(s)
        k, _ = grid.snap(t)
        ms, mt = M(i), M(k)
        ref = projected_square_integral(spec, grid, i)
        cont = zeta1_square_integral(spec, grid.nodes[i])
        add(f"E[M_s M_t] s={s:g} t={t:g}", MCEstimate.from_samples(ms * mt, ref), cont)
        if i not in seen:
            seen.add(i)
            add(f"E[M_s^2] s={s:g}", MCEstimate.from_samples(ms * ms, ref), cont)
        for name, phi in (("id", lambda x: x), ("tanh", np.tanh)):
            add(f"E[(M_t-M_s) {name}(M_s)] s={s:g} t={t:g}", MCEstimate.from_samples((mt - ms) * phi(ms), 0.0))
    return MartingaleReport(spec.variant, tuple(cases), red)


def route_rms_exact(spec: KernelSpec, grid: TimeGrid, t_index=None):
    """Root-mean-square gap between the two routes without sampling.

    Both routes are linear in the Brownian increments, so the mean square
    is the L2 norm of the difference of their coefficient vectors.  Near
    s = t the cell errors do not shrink with the grid, which makes the RMS
    decay like dt**0.5 for kernels with a singular Theta.
    """
    i = grid.n if t_index is None else t_index
    data = martingale_data(spec)
    psi = _integrand_rows(spec, data, grid)[i - 1]
    coef = psi @ (np.diff(build_KF(spec, grid).dense(), axis=0) / grid.dt)
    coef[:i] -= cell_means(data.zeta1, grid, data.zeta1_origin)[:i]
    return float(np.sqrt(np.sum(coef**2) * grid.dt))


def route_rms(spec, grid, rng, n_paths, t_index=None):
    """RMS over paths of the difference between the two routes at t_index (default n)."""
    bm = sample_brownian(grid, rng, n_paths)
    bf, red = sample_M(spec, bm, grid.n if t_index is None else t_index)
    return float(np.sqrt(np.mean((bf - red) ** 2)))
