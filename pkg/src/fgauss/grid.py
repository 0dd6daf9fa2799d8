"""Uniform time grids and functions sampled on them."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConventionMismatch, DomainError

CELL = "cell"
NODE = "node"


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0, T] into ``n`` cells.

    Cell ``j`` (0-based) is the interval (t_j, t_{j+1}].
    """

    T: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise DomainError(f"T must be positive, got {self.T}")
        if int(self.n) != self.n or self.n < 2:
            raise DomainError(f"n must be an integer >= 2, got {self.n}")

    @property
    def dt(self):
        return self.T / self.n

    @cached_property
    def nodes(self):
        return np.arange(self.n + 1) * self.dt

    @cached_property
    def midpoints(self):
        return (np.arange(self.n) + 0.5) * self.dt

    def size(self, convention):
        return self.n if convention == CELL else self.n + 1

    def snap(self, t):
        """Index of the node nearest to ``t`` and the snapping offset."""
        i = int(np.clip(np.rint(t / self.dt), 0, self.n))
        return i, float(self.nodes[i] - t)

    def cell_average(self, f):
        """Cell averages of a vectorized function by 8-point Gauss-Legendre."""
        from .quadrature import gauss_legendre

        x, w = gauss_legendre(8)
        s = self.nodes[:-1, None] + self.dt * x
        return np.asarray(f(s), dtype=float) @ w


@dataclass(frozen=True)
class GridFunction:
    """Values on a grid: per cell (piecewise constant) or per node.

    ``values`` may carry leading batch dimensions (e.g. one row per path).
    """

    grid: TimeGrid
    values: np.ndarray
    convention: str = CELL

    def __post_init__(self):
        if self.convention not in (CELL, NODE):
            raise ConventionMismatch(f"unknown convention {self.convention!r}")
        v = np.asarray(self.values, dtype=float)
        if v.shape[-1:] != (self.grid.size(self.convention),):
            raise ConventionMismatch(
                f"{self.convention}-valued function on n={self.grid.n} needs "
                f"{self.grid.size(self.convention)} values, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ConventionMismatch("grid function values must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid, f, convention=CELL):
        """Sample ``f``: cell averages for cells, point values for nodes."""
        if convention == CELL:
            return cls(grid, grid.cell_average(f), CELL)
        return cls(grid, np.asarray(f(grid.nodes), dtype=float) * np.ones(grid.n + 1), NODE)

    @classmethod
    def constant(cls, grid, c=1.0, convention=CELL):
        return cls(grid, np.full(grid.size(convention), float(c)), convention)

    def l2_norm(self):
        """L2 norm over [0, T] (trapezoid rule for node values)."""
        dt = self.grid.dt
        v = self.values
        if self.convention == CELL:
            return np.sqrt(np.sum(v**2, axis=-1) * dt)
        w = np.full(v.shape[-1], dt)
        w[[0, -1]] = dt / 2
        return np.sqrt(v**2 @ w)

    def __add__(self, other):
        _same(self, other)
        return GridFunction(self.grid, self.values + other.values, self.convention)

    def __sub__(self, other):
        _same(self, other)
        return GridFunction(self.grid, self.values - other.values, self.convention)

    def __mul__(self, c):
        return GridFunction(self.grid, self.values * c, self.convention)

    __rmul__ = __mul__


def _same(a, b):
    if a.grid != b.grid or a.convention != b.convention:
        raise ConventionMismatch("grid functions live on different grids or conventions")
