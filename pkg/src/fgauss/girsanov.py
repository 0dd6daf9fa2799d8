"""Girsanov densities, quasi-invariance and integration-by-parts checks.

A shift direction is given by a cell-valued hdot in L2; the process is
shifted by h^F = K_F hdot.  Densities and weights are computed on the driving
Brownian batch (route ``"brownian"``) or through (K_F*)^-1 and the B^F-integral
(route ``"operator"``); the two agree up to the inverse round-trip error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import ConventionMismatch, DomainError
from .grid import CELL, NODE, GridFunction, TimeGrid
from .grid_ops import apply, build_KF, build_KF_star_inv, build_RF_matrix
from .kernels import KernelSpec
from .sampling import BROWNIAN, PathBatch, RngConfig, bf_integral, sample_fgaussian, volterra_transform
from .stats import MCEstimate, difference

BROWNIAN_ROUTE, OPERATOR_ROUTE = "brownian", "operator"


@dataclass(frozen=True)
class ShiftDirection:
    """Cameron-Martin direction: hdot (cell), h (node), h^F = K_F hdot (node)."""

    spec: KernelSpec
    hdot: GridFunction
    h: GridFunction
    hF: GridFunction

    @classmethod
    def from_hdot(cls, spec: KernelSpec, hdot: Union[GridFunction, Callable], grid: TimeGrid = None):
        if callable(hdot) and not isinstance(hdot, GridFunction):
            if grid is None:
                raise DomainError("a grid is required for a callable hdot")
            hdot = GridFunction.from_function(grid, hdot)
        if hdot.convention != CELL:
            raise ConventionMismatch("hdot must be cell-valued")
        g = hdot.grid
        h = GridFunction(g, np.concatenate([[0.0], np.cumsum(hdot.values) * g.dt]), NODE)
        hF = apply(build_KF(spec, g), hdot)
        return cls(spec, hdot, h, hF)

    @property
    def grid(self):
        return self.hdot.grid

    @property
    def norm_H(self):
        return float(self.hdot.l2_norm())

    def scaled(self, c):
        return ShiftDirection(self.spec, self.hdot * c, self.h * c, self.hF * c)


def _check_bm(shift, bm):
    if bm.kind != BROWNIAN:
        raise ConventionMismatch("expected a Brownian batch")
    if bm.grid != shift.grid:
        raise ConventionMismatch("shift and batch live on different grids")


def stochastic_integral(shift: ShiftDirection, bm: PathBatch, route=BROWNIAN_ROUTE):
    """int hdot dB per path, directly or as int (K_F*)^-1 hdot dB^F."""
    _check_bm(shift, bm)
    if route == BROWNIAN_ROUTE:
        return bm.values @ shift.hdot.values
    if route == OPERATOR_ROUTE:
        psi = apply(build_KF_star_inv(shift.spec, shift.grid), shift.hdot)
        return bf_integral(psi, volterra_transform(shift.spec, bm))
    raise DomainError(f"unknown route {route!r}")


def girsanov_density(shift: ShiftDirection, bm: PathBatch, route=BROWNIAN_ROUTE):
    """alpha = exp(int hdot dB - ||hdot||^2 / 2) per path."""
    return np.exp(stochastic_integral(shift, bm, route) - 0.5 * shift.norm_H**2)


def ibp_weight(shift: ShiftDirection, bm: PathBatch, route=BROWNIAN_ROUTE):
    """beta = int hdot dB per path, the derivative of the density at zero shift."""
    return stochastic_integral(shift, bm, route)


@dataclass(frozen=True)
class CheckReport:
    """Two-sided Monte Carlo comparison with common random numbers."""

    name: str
    lhs: MCEstimate
    rhs: MCEstimate
    diff: MCEstimate
    z_gate: float = 4.0

    @property
    def z(self):
        return self.diff.zscore

    @property
    def passed(self):
        return bool(abs(self.z) < self.z_gate)

    def as_dict(self):
        return {
            "name": self.name,
            "lhs": self.lhs.mean,
            "rhs": self.rhs.mean,
            "stderr": self.diff.stderr,
            "z": self.z,
            "pass": self.passed,
        }


def _report(name, lhs, rhs, z_gate):
    L = MCEstimate.from_samples(lhs).check_variance(f"{name} lhs")
    R = MCEstimate.from_samples(rhs).check_variance(f"{name} rhs")
    return CheckReport(name, L, R, difference(lhs, rhs), z_gate)


def _draw(spec, grid, rng, n_paths, batch):
    if batch is not None:
        bm = batch
        return bm, volterra_transform(spec, bm)
    return sample_fgaussian(spec, grid, rng, n_paths)


def quasi_invariance_check(
    spec: KernelSpec, G, shift: ShiftDirection, rng: RngConfig = None, n_paths=100_000, batch=None, z_gate=4.0
) -> CheckReport:
    """E[G(B^F + h^F)] against E[G(B^F) alpha] on the same paths."""
    grid = shift.grid
    bm, fg = _draw(spec, grid, rng, n_paths, batch)
    lhs = G.evaluate(fg.nodes + shift.hF.values, grid)
    rhs = G.evaluate(fg.nodes, grid) * girsanov_density(shift, bm)
    return _report(f"quasi-invariance {G.name}", lhs, rhs, z_gate)


def ibp_check(
    spec: KernelSpec, G, shift: ShiftDirection, rng: RngConfig = None, n_paths=100_000, batch=None, z_gate=4.0
) -> CheckReport:
    """E[D_{h^F} G] by the chain rule against E[G beta]."""
    grid = shift.grid
    bm, fg = _draw(spec, grid, rng, n_paths, batch)
    idx, _ = G.snap(grid)
    lhs = G.gradient(fg.nodes, grid) @ shift.hF.values[idx]
    rhs = G.evaluate(fg.nodes, grid) * ibp_weight(shift, bm)
    return _report(f"ibp {G.name}", lhs, rhs, z_gate)


def reweighted_moments(spec: KernelSpec, shift: ShiftDirection, eps, indices, rng=None, n_paths=100_000, batch=None):
    """Moments of B^F + eps h^F under the density of the shift by -eps h^F.

    Returns (means, second moments, R_F block): the reweighted process should
    again be centred with covariance R_F.  Each mean is an MCEstimate.
    """
    grid = shift.grid
    bm, fg = _draw(spec, grid, rng, n_paths, batch)
    w = girsanov_density(shift.scaled(-eps), bm)
    X = fg.nodes[:, indices] + eps * shift.hF.values[indices]
    means = [MCEstimate.from_samples(w * X[:, i], 0.0) for i in range(len(indices))]
    R = build_RF_matrix(spec, grid)[np.ix_(indices, indices)]
    second = {
        (a, b): MCEstimate.from_samples(w * X[:, a] * X[:, b], R[a, b])
        for a in range(len(indices))
        for b in range(a, len(indices))
    }
    return means, second, R
