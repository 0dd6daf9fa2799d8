"""Discretised kernel operators on a uniform grid.

All operators are stored as square ``n x n`` triangular matrices.  A
node-valued side of a causal (lower) operator indexes the nodes t_1..t_n; the
value at t_0 is zero for every function in the range of K_F.  A node-valued
side of an anticausal (upper) operator indexes t_0..t_{n-1}; the value at
t_n vanishes.  :func:`apply` handles the dropped node.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ConventionMismatch, DomainError, NonFinite, SingularOperator
from .grid import CELL, NODE, GridFunction, TimeGrid
from .kernels import KernelSpec, call_gap, gap_aware
from .quadrature import MAX_LEVELS, gauss_legendre, interpolation_matrix, unit_rule

LOWER, UPPER = "lower", "upper"
QUADRATURE, ANALYTIC, NUMERICAL = "quadrature", "analytic", "numerical-only"
ORDER = 16
PIVOT_RTOL = 1e-14


@dataclass(frozen=True, eq=False)
class TriangularOperator:
    """Immutable triangular matrix acting between grid functions.

    Attributes
    ----------
    grid : TimeGrid
    weights : ndarray, shape (n, n)
    orientation : {"lower", "upper"}
        Lower operators are causal, upper ones anticausal.
    source, target : {"cell", "node"}
    route : str
        How the weights were obtained: "quadrature", "analytic" or
        "numerical-only" (triangular solve).
    """

    grid: TimeGrid
    weights: np.ndarray
    orientation: str
    source: str
    target: str
    route: str = QUADRATURE
    name: str = ""

    def __post_init__(self):
        n = self.grid.n
        w = np.array(self.weights, dtype=float)
        if w.shape != (n, n):
            raise ConventionMismatch(f"weights must be {n}x{n}, got {w.shape}")
        if self.orientation not in (LOWER, UPPER):
            raise ConventionMismatch(f"unknown orientation {self.orientation!r}")
        if not np.all(np.isfinite(w)):
            raise NonFinite(f"operator {self.name or '?'} has non-finite weights")
        w = np.tril(w) if self.orientation == LOWER else np.triu(w)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n(self):
        return self.grid.n

    def _node_index(self):
        return slice(1, None) if self.orientation == LOWER else slice(0, -1)

    def dense(self):
        """Matrix of shape (target size, source size) including dropped nodes."""
        n = self.n
        out = np.zeros((self.grid.size(self.target), self.grid.size(self.source)))
        rows = self._node_index() if self.target == NODE else slice(0, n)
        cols = self._node_index() if self.source == NODE else slice(0, n)
        out[rows, cols] = self.weights
        return out

    def compose(self, other: "TriangularOperator") -> "TriangularOperator":
        """The operator ``self o other`` (apply ``other`` first)."""
        if self.grid != other.grid:
            raise ConventionMismatch("operators live on different grids")
        if self.orientation != other.orientation:
            raise ConventionMismatch("composing lower with upper operators is not triangular")
        if self.source != other.target:
            raise ConventionMismatch(
                f"cannot feed {other.target}-valued output into a {self.source}-valued input"
            )
        route = self.route if self.route == other.route else "composite"
        return TriangularOperator(
            self.grid,
            self.weights @ other.weights,
            self.orientation,
            other.source,
            self.target,
            route,
            f"{self.name}*{other.name}",
        )

    def __matmul__(self, other):
        if isinstance(other, TriangularOperator):
            return self.compose(other)
        if isinstance(other, GridFunction):
            return apply(self, other)
        return NotImplemented


def apply(op: TriangularOperator, g: GridFunction) -> GridFunction:
    """Apply ``op`` to ``g`` (batched over leading dimensions of ``g.values``)."""
    if g.grid != op.grid:
        raise ConventionMismatch("grid function and operator live on different grids")
    if g.convention != op.source:
        raise ConventionMismatch(f"operator expects {op.source} values, got {g.convention}")
    x = g.values
    if op.source == NODE:
        drop = 0 if op.orientation == LOWER else -1
        scale = np.max(np.abs(x), axis=-1) + 1e-300
        if np.any(np.abs(x[..., drop]) > 1e-12 * scale):
            where = "t=0" if drop == 0 else "t=T"
            raise ConventionMismatch(f"node input to {op.name or 'operator'} must vanish at {where}")
        x = x[..., op._node_index()]
    y = x @ op.weights.T
    if op.target == NODE:
        pad = [(0, 0)] * (y.ndim - 1) + [(1, 0) if op.orientation == LOWER else (0, 1)]
        y = np.pad(y, pad)
    return GridFunction(op.grid, y, op.target)


# ---------------------------------------------------------------- quadrature


class _CausalTable(NamedTuple):
    L: np.ndarray  # L[r, j] = int_{cell j} fn(t_{r+1}, s) ds
    V: Optional[np.ndarray]  # Gauss-Legendre values, zero on unused entries
    first: int  # first cell handled by V and G
    G: np.ndarray  # values on the diagonal-graded rule, G[j - first]
    dx: np.ndarray  # unit nodes of the diagonal rule
    dw: np.ndarray
    C0: Optional[np.ndarray]  # cell-0 values on the doubly graded rule
    w0: Optional[np.ndarray]


def _smooth(p):
    return p is None or (p >= 0 and float(p).is_integer())


def _check(a, what):
    if not np.all(np.isfinite(a)):
        raise NonFinite(f"non-finite values while assembling {what}")
    return a


def _causal(fn, grid, diag_power=None, origin_power=None, keep=False, what="operator"):
    """Cell integrals of ``fn(t_i, s)`` over cells left of t_i (i = 1..n)."""
    n, dt = grid.n, grid.dt
    x, w = gauss_legendre(ORDER)
    first = 0 if _smooth(origin_power) else 1
    r, j = np.tril_indices(n, -1)
    if first:
        keep_ = j >= 1
        r, j = r[keep_], j[keep_]
    vals = call_gap(
        fn,
        dt * (r + 1.0)[:, None],
        dt * (j[:, None] + x),
        dt * ((r - j + 1.0)[:, None] - x),
    )
    vals = _check(np.asarray(vals, float) * np.ones((1, ORDER)), what)
    L = np.zeros((n, n))
    L[r, j] = vals @ (w * dt)

    dx, dw, dxc = unit_rule(None, diag_power, ORDER, MAX_LEVELS)
    jd = np.arange(first, n)
    G = call_gap(fn, dt * (jd + 1.0)[:, None], dt * (jd[:, None] + dx), dt * dxc[None, :])
    G = _check(np.asarray(G, float) * np.ones((1, dx.size)), what)
    L[jd, jd] = G @ (dw * dt)

    C0 = w0 = None
    if first:
        x0, w0u, x0c = unit_rule(origin_power, diag_power, ORDER, MAX_LEVELS)
        rr = np.arange(n)
        C0 = call_gap(fn, dt * (rr + 1.0)[:, None], dt * x0[None, :], dt * (rr[:, None] + x0c))
        C0 = _check(np.asarray(C0, float) * np.ones((1, x0.size)), what)
        w0 = w0u * dt
        L[:, 0] = C0 @ w0

    V = None
    if keep:
        V = np.zeros((n, n, ORDER))
        V[r, j] = vals
    return _CausalTable(L, V, first, G, dx, dw * dt, C0, w0)


def causal_cell_integrals(fn, grid, diag_power=None, origin_power=None):
    """Matrix L[r, j] = int_{cell j} fn(t_{r+1}, s) ds for j <= r (graded near singularities).

    ``fn(t, s)`` may accept the exact gap ``d = t - s`` (see :func:`kernels.gap_aware`).
    """
    return _causal(fn, grid, diag_power, origin_power).L


def _anticausal(fn, grid, diag_power=None, what="operator"):
    """U[i, k] = int_{cell k} fn(s, t_i) ds for cells right of t_i (i = 0..n-1).

    ``fn`` is called with the later time first and the gap ``s - t_i``.
    """
    n, dt = grid.n, grid.dt
    x, w = gauss_legendre(ORDER)
    i, k = np.triu_indices(n, 1)
    vals = call_gap(fn, dt * (k[:, None] + x), dt * i[:, None] * 1.0, dt * ((k - i)[:, None] + x))
    vals = _check(np.asarray(vals, float) * np.ones((1, ORDER)), what)
    U = np.zeros((n, n))
    U[i, k] = vals @ (w * dt)

    dx, dw, _ = unit_rule(diag_power, None)
    ii = np.arange(n)
    G = call_gap(fn, dt * (ii[:, None] + dx), dt * ii[:, None] * 1.0, dt * dx[None, :])
    G = _check(np.asarray(G, float) * np.ones((1, dx.size)), what)
    U[ii, ii] = G @ (dw * dt)
    return U


def cell_means(f, grid, origin_power=None):
    """Cell averages of a one-variable function, graded in cell 0 when singular."""
    x, w = gauss_legendre(ORDER)
    dt = grid.dt
    out = np.asarray(f(dt * (np.arange(grid.n)[:, None] + x)), float) * np.ones((1, ORDER)) @ w
    if not _smooth(origin_power):
        x0, w0, _ = unit_rule(origin_power, None)
        out[0] = np.asarray(f(dt * x0), float) * np.ones_like(x0) @ w0
    return _check(out, "cell averages")


def _kernel_fn(spec):
    return gap_aware(lambda t, s, d=None: spec._F(t, s, d))


@lru_cache(maxsize=16)
def _kernel_L(spec: KernelSpec, grid: TimeGrid) -> np.ndarray:
    tab = _causal(_kernel_fn(spec), grid, spec.diag_power, spec.origin_power, what="K_F")
    tab.L.setflags(write=False)
    return tab.L


# ------------------------------------------------------------------ builders


def build_KF(spec: KernelSpec, grid: TimeGrid) -> TriangularOperator:
    """K_F as a cell -> node operator: (K_F h)(t_i) = sum_j h_j int_{cell j} F(t_i, s) ds."""
    _same_horizon(spec, grid)
    L = _kernel_L(spec, grid)
    return TriangularOperator(grid, L, LOWER, CELL, NODE, QUADRATURE, "K_F")


def build_KF_star(spec: KernelSpec, grid: TimeGrid) -> TriangularOperator:
    """Adjoint K_F* in telescoped form (cell -> cell).

    Row j uses the cell averages of F(t_k, .) on cell j, so that the image of
    the indicator of [0, t_k] is exactly that cell average.  This form never
    evaluates F on the diagonal.
    """
    _same_horizon(spec, grid)
    L = _kernel_L(spec, grid)
    prev = np.vstack([np.zeros((1, grid.n)), L[:-1]])
    return TriangularOperator(grid, (L - prev).T / grid.dt, UPPER, CELL, CELL, QUADRATURE, "K_F*")


def build_script_KF_star(spec: KernelSpec, grid: TimeGrid) -> TriangularOperator:
    """The operator g -> int_t^T F(s, t) g(s) ds (cell -> node).

    Raises
    ------
    NonFinite
        If F(s, t_0) is not finite, e.g. for fBm kernels whose s = 0 row blows up.
    """
    _same_horizon(spec, grid)
    U = _anticausal(_kernel_fn(spec), grid, spec.diag_power, what="script K_F*")
    return TriangularOperator(grid, U, UPPER, CELL, NODE, QUADRATURE, "script K_F*")


def _diff(grid):
    """Backward difference from nodes t_1..t_n (with value 0 at t_0) to cells."""
    n = grid.n
    return (np.eye(n) - np.eye(n, k=-1)) / grid.dt


def build_KF_inv(spec: KernelSpec, grid: TimeGrid, route: str = "auto") -> TriangularOperator:
    """Inverse of K_F as a node -> cell operator.

    The analytic route applies ``Phi`` and backward differences then divides
    by the cell averages of ``xi``.  The fallback inverts the K_F matrix.

    Parameters
    ----------
    route : {"auto", "analytic", "fallback"}
    """
    _same_horizon(spec, grid)
    data = spec.inversion_data
    if route not in ("auto", "analytic", "fallback"):
        raise DomainError(f"unknown route {route!r}")
    if route == "analytic" and (data is None or not data.has_forward):
        raise DomainError(f"{spec.variant} has no analytic inverse data")
    if route == "fallback" or data is None or not data.has_forward:
        W = _triangular_inverse(build_KF(spec, grid).weights, lower=True)
        return TriangularOperator(grid, W, LOWER, NODE, CELL, NUMERICAL, "K_F^-1")

    D = _diff(grid)
    xi = cell_means(data.xi, grid, data.xi_origin)
    if data.Phi is None:
        core = D
    else:
        P = _causal(data.Phi, grid, data.phi_power, data.phi_origin, what="K_Phi").L
        if data.differentiate_first:
            core = D @ P @ D
        else:
            avg = (np.eye(grid.n) + np.eye(grid.n, k=-1)) / 2
            core = D @ P @ avg
    return TriangularOperator(grid, core / xi[:, None], LOWER, NODE, CELL, ANALYTIC, "K_F^-1")


def build_KF_star_inv(spec: KernelSpec, grid: TimeGrid, route: str = "auto") -> TriangularOperator:
    """Inverse of K_F* (cell -> cell).

    The analytic route divides the input by the cell averages of zeta1,
    integrates Theta(s, t) over cells right of each node, differences in t
    and divides by the cell averages of zeta2.  Dividing by averages rather
    than integrating 1/zeta1 against Theta keeps the origin cell accurate
    when the input carries the same singularity as zeta1.
    """
    _same_horizon(spec, grid)
    data = spec.inversion_data
    if route not in ("auto", "analytic", "fallback"):
        raise DomainError(f"unknown route {route!r}")
    if route == "analytic" and data is None:
        raise DomainError(f"{spec.variant} has no analytic inverse data")
    if route == "fallback" or data is None:
        W = _triangular_inverse(build_KF_star(spec, grid).weights, lower=False)
        return TriangularOperator(grid, W, UPPER, CELL, CELL, NUMERICAL, "(K_F*)^-1")

    U = _anticausal(data.Theta, grid, data.theta_power, what="(K_F*)^-1")
    Q = np.vstack([U, np.zeros((1, grid.n))])
    z1 = cell_means(data.zeta1, grid, data.zeta1_origin)
    z2 = cell_means(data.zeta2, grid, data.zeta2_origin)
    W = (Q[:-1] - Q[1:]) / (grid.dt * z2[:, None] * z1[None, :])
    return TriangularOperator(grid, W, UPPER, CELL, CELL, ANALYTIC, "(K_F*)^-1")


def _triangular_inverse(A, lower):
    diag = np.abs(np.diag(A))
    rows = np.linalg.norm(A, axis=1)
    bad = np.nonzero(diag < PIVOT_RTOL * rows)[0]
    if bad.size or not np.all(rows > 0):
        idx = int(bad[0]) if bad.size else int(np.argmin(rows))
        raise SingularOperator(f"pivot {idx} is negligible relative to its row")
    return solve_triangular(A, np.eye(A.shape[0]), lower=lower)


def build_RF_matrix(spec: KernelSpec, grid: TimeGrid) -> np.ndarray:
    """Covariance matrix R_F(t_i, t_k) on all nodes (shape (n+1, n+1)).

    Each entry is int_0^{t_i ^ t_k} F(t_i, s) F(t_k, s) ds.  Cells adjacent
    to the diagonal use a graded rule; products with smooth rows are handled
    by product-integration weights interpolated onto the Gauss-Legendre nodes.
    """
    _same_horizon(spec, grid)
    tab = _causal(_kernel_fn(spec), grid, spec.diag_power, spec.origin_power, keep=True, what="R_F")
    n = grid.n
    _, w = gauss_legendre(ORDER)
    Vw = (tab.V * np.sqrt(w * grid.dt)).reshape(n, -1)
    M = Vw @ Vw.T
    first = tab.first
    P = interpolation_matrix(ORDER, tab.dx)
    what = (tab.G * tab.dw) @ P
    C = np.zeros((n, n))
    C[first:] = np.einsum("jq,rjq->jr", what, tab.V[:, first:, :])
    M += C + C.T
    jd = np.arange(first, n)
    M[jd, jd] += (tab.G**2) @ tab.dw
    if tab.C0 is not None:
        M += (tab.C0 * tab.w0) @ tab.C0.T
    out = np.zeros((n + 1, n + 1))
    out[1:, 1:] = 0.5 * (M + M.T)
    return out


def _same_horizon(spec, grid):
    if abs(spec.horizon - grid.T) > 1e-12 * spec.horizon:
        raise DomainError(f"kernel horizon {spec.horizon} differs from grid horizon {grid.T}")


# --------------------------------------------------------------- diagnostics


def adjointness_residual(spec: KernelSpec, grid: TimeGrid, g, h) -> float:
    """Relative gap between <K_F* g, h> and the Stieltjes sum of g against K_F h.

    ``g`` and ``h`` are vectorized callables.  The Stieltjes sum samples ``g``
    at cell midpoints; the pairing uses cell averages.
    """
    gc = GridFunction.from_function(grid, g)
    hc = GridFunction.from_function(grid, h)
    lhs = grid.dt * apply(build_KF_star(spec, grid), gc).values @ hc.values
    kh = apply(build_KF(spec, grid), hc).values
    rhs = np.asarray(g(grid.midpoints), float) @ np.diff(kh)
    return abs(lhs - rhs) / (gc.l2_norm() * hc.l2_norm())


def round_trip_residuals(spec: KernelSpec, grid: TimeGrid, h, route: str = "auto") -> dict:
    """Relative errors of K_F^-1 K_F h - h and (K_F*)^-1 K_F* h - h for a callable ``h``.

    Keys ``KF`` and ``KF_star`` hold L2 norms; ``KF_sup`` and ``KF_star_sup``
    the largest cell errors relative to max |h|.
    """
    hc = GridFunction.from_function(grid, h)
    back = apply(build_KF_inv(spec, grid, route), apply(build_KF(spec, grid), hc))
    star = apply(build_KF_star_inv(spec, grid, route), apply(build_KF_star(spec, grid), hc))
    norm, peak = hc.l2_norm(), np.max(np.abs(hc.values))
    return {
        "KF": float((back - hc).l2_norm() / norm),
        "KF_star": float((star - hc).l2_norm() / norm),
        "KF_sup": float(np.max(np.abs(back.values - hc.values)) / peak),
        "KF_star_sup": float(np.max(np.abs(star.values - hc.values)) / peak),
    }
