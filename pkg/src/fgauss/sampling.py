"""Brownian and F-Gaussian path batches, Cameron-Martin shifts and B^F-integrals.

Random numbers come from counter-based Philox streams.  Paths are grouped in
fixed blocks of :data:`BLOCK_SIZE`; block ``b`` of stream ``k`` is seeded by
``SeedSequence(seed, spawn_key=(k, b))``.  The draws of a path therefore
depend only on the seed and its index, never on the worker count or the total
number of paths.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.linalg import cholesky, eigvalsh
from scipy.special import ndtri

from .errors import ConventionMismatch, DomainError, NotPSD
from .grid import CELL, GridFunction, TimeGrid
from .grid_ops import apply, build_KF, build_KF_star, build_RF_matrix
from .kernels import KernelSpec

BLOCK_SIZE = 4096
STREAM_BROWNIAN = 0
STREAM_CHOLESKY = 1
JITTER = 1e-12

BROWNIAN, FGAUSSIAN = "brownian", "fgaussian"
IID, VOLTERRA, CHOLESKY = "iid", "volterra", "cholesky"


@dataclass(frozen=True)
class RngConfig:
    """Seed and parallelism hint.  ``workers`` never changes the draws."""

    seed: int
    workers: int = 1

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if self.workers < 1:
            raise DomainError("workers must be >= 1")


def _block_normals(seed, stream, block, dim):
    ss = np.random.SeedSequence(int(seed), spawn_key=(stream, block))
    raw = np.random.Philox(ss).random_raw(BLOCK_SIZE * dim)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u).reshape(BLOCK_SIZE, dim)


def standard_normals(rng: RngConfig, n_paths: int, dim: int, stream: int = STREAM_BROWNIAN):
    """``n_paths x dim`` standard normals, row ``p`` keyed by path index ``p``."""
    if n_paths < 1:
        raise DomainError("n_paths must be >= 1")
    blocks = -(-n_paths // BLOCK_SIZE)

    def make(b):
        return _block_normals(rng.seed, stream, b, dim)

    if rng.workers > 1 and blocks > 1:
        with ThreadPoolExecutor(max_workers=rng.workers) as pool:
            parts = list(pool.map(make, range(blocks)))
    else:
        parts = [make(b) for b in range(blocks)]
    return np.concatenate(parts)[:n_paths]


@dataclass(frozen=True, eq=False)
class PathBatch:
    """An ensemble of sampled paths.

    Brownian batches store cell increments (``n_paths x n``); F-Gaussian
    batches store node values (``n_paths x (n+1)``) with value 0 at t_0.
    """

    grid: TimeGrid
    kind: str
    values: np.ndarray
    provenance: str
    rng: Optional[RngConfig] = None
    spec: Optional[KernelSpec] = None
    jitter: float = 0.0
    source: Optional["PathBatch"] = field(default=None, repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, float)
        width = self.grid.n if self.kind == BROWNIAN else self.grid.n + 1
        if v.ndim != 2 or v.shape[1] != width:
            raise ConventionMismatch(f"{self.kind} batch needs {width} columns, got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_paths(self):
        return self.values.shape[0]

    @property
    def increments(self):
        if self.kind == BROWNIAN:
            return self.values
        return np.diff(self.values, axis=1)

    @property
    def nodes(self):
        """Node values, shape ``n_paths x (n+1)``."""
        if self.kind == BROWNIAN:
            return np.pad(np.cumsum(self.values, axis=1), ((0, 0), (1, 0)))
        return self.values

    def at(self, i):
        return self.nodes[:, i]


def sample_brownian(grid: TimeGrid, rng: RngConfig, n_paths: int) -> PathBatch:
    """Brownian increments with variance ``dt`` per cell."""
    dB = standard_normals(rng, n_paths, grid.n, STREAM_BROWNIAN) * np.sqrt(grid.dt)
    return PathBatch(grid, BROWNIAN, dB, IID, rng)


def volterra_transform(spec: KernelSpec, bm: PathBatch) -> PathBatch:
    """B^F(t_i) = sum_j (cell integral of F(t_i, .) over cell j) dB_j / dt."""
    if bm.kind != BROWNIAN:
        raise ConventionMismatch("volterra_transform needs a Brownian batch")
    op = build_KF(spec, bm.grid)
    out = apply(op, GridFunction(bm.grid, bm.values / bm.grid.dt, CELL))
    return PathBatch(bm.grid, FGAUSSIAN, out.values, VOLTERRA, bm.rng, spec, source=bm)


def sample_fgaussian(spec: KernelSpec, grid: TimeGrid, rng: RngConfig, n_paths: int):
    """Brownian batch and its Volterra transform (shared driving noise)."""
    bm = sample_brownian(grid, rng, n_paths)
    return bm, volterra_transform(spec, bm)


def covariance_factor(spec: KernelSpec, grid: TimeGrid):
    """Lower Cholesky factor of R_F on t_1..t_n and the jitter that was needed."""
    R = build_RF_matrix(spec, grid)[1:, 1:]
    try:
        return cholesky(R, lower=True), 0.0
    except np.linalg.LinAlgError:
        pass
    eps = JITTER * np.trace(R) / grid.n
    try:
        return cholesky(R + eps * np.eye(grid.n), lower=True), eps
    except np.linalg.LinAlgError:
        lam = eigvalsh(R)
        raise NotPSD(
            f"R_F is not positive definite after jitter {eps:.3g} "
            f"(smallest eigenvalue {lam[0]:.3g}, largest {lam[-1]:.3g})"
        ) from None


def cholesky_sample(spec: KernelSpec, grid: TimeGrid, rng: RngConfig, n_paths: int) -> PathBatch:
    """Exact Gaussian node samples with covariance R_F (independent of the Volterra route)."""
    L, eps = covariance_factor(spec, grid)
    z = standard_normals(rng, n_paths, grid.n, STREAM_CHOLESKY)
    x = np.pad(z @ L.T, ((0, 0), (1, 0)))
    return PathBatch(grid, FGAUSSIAN, x, CHOLESKY, rng, spec, jitter=eps)


@dataclass(frozen=True)
class CameronMartinElement:
    """h^F = K_F hdot together with its Cameron-Martin norm ||hdot||_{L2}."""

    hdot: GridFunction
    hF: GridFunction

    @property
    def norm(self):
        return float(self.hdot.l2_norm())


def cameron_martin_shift(spec: KernelSpec, hdot: GridFunction) -> CameronMartinElement:
    if hdot.convention != CELL:
        raise ConventionMismatch("hdot must be cell-valued")
    return CameronMartinElement(hdot, apply(build_KF(spec, hdot.grid), hdot))


def bf_integral(psi: GridFunction, path: PathBatch) -> np.ndarray:
    """Riemann sums sum_i psi_i (B^F_{t_{i+1}} - B^F_{t_i}) per path."""
    if path.kind != FGAUSSIAN:
        raise ConventionMismatch("bf_integral needs an F-Gaussian batch")
    if psi.convention != CELL or psi.grid != path.grid:
        raise ConventionMismatch("psi must be cell-valued on the path grid")
    return path.increments @ psi.values


def kf_star_coefficients(
    spec: KernelSpec, psi: Union[GridFunction, Callable], grid: TimeGrid, oversample: int = 4
) -> np.ndarray:
    """Cell averages of K_F* psi on ``grid``.

    A callable ``psi`` is resolved on a grid ``oversample`` times finer and
    averaged back, so the result approximates the continuous K_F* psi rather
    than its action on the cell averages of psi.
    """
    if isinstance(psi, GridFunction):
        if psi.convention != CELL or psi.grid != grid:
            raise ConventionMismatch("psi must be cell-valued on the batch grid")
        return apply(build_KF_star(spec, grid), psi).values
    fine = TimeGrid(grid.T, grid.n * oversample)
    vals = apply(build_KF_star(spec, fine), GridFunction.from_function(fine, psi)).values
    return vals.reshape(grid.n, oversample).mean(axis=1)


def bf_integral_via_brownian(
    spec: KernelSpec, psi: Union[GridFunction, Callable], bm: PathBatch, oversample: int = 4
) -> np.ndarray:
    """The B^F-integral written as sum_j (K_F* psi)_j dB_j on the driving noise.

    For a cell-valued ``psi`` this coincides with :func:`bf_integral` on the
    Volterra transform of ``bm`` up to rounding (the telescoped K_F* is the
    exact adjoint of the cell-averaged transform).  Pass a callable to
    measure the discretization error of the Riemann-sum route.
    """
    if bm.kind != BROWNIAN:
        raise ConventionMismatch("bf_integral_via_brownian needs a Brownian batch")
    return bm.values @ kf_star_coefficients(spec, psi, bm.grid, oversample)
