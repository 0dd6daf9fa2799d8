"""Black-Scholes baseline, rough variance paths and Monte Carlo deltas.

Deltas come with a central finite-difference estimate on the same paths and,
where one exists, a deterministic 1-d quadrature oracle.  The rough variance
is v_t = v0 exp(B^F_t) with no drift correction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from . import quadrature as quad
from .errors import (
    DegenerateT0,
    DomainError,
    FGaussError,
    NonIntegrableReciprocal,
    VarianceBlowup,
)
from .grid import NODE, GridFunction, TimeGrid
from .grid_ops import ORDER, apply, build_KF, build_KF_star, build_KF_star_inv
from .kernels import Constant, KernelSpec, cell_integral, covariance, eval_kernel
from .sampling import FGAUSSIAN, PathBatch, RngConfig, bf_integral, sample_fgaussian, volterra_transform
from .stats import MCEstimate, difference, zscore

CLAMP = 700.0
T0_MIN = 1e-12
# Refinement ratio of the reciprocal-weight energy above which it is taken to diverge.
DIVERGENCE_RATIO = 0.97


# ------------------------------------------------------------ market inputs


@dataclass(frozen=True)
class MarketParams:
    S0: float
    K: float
    r: float
    sigma: float
    T: float

    def __post_init__(self):
        for name in ("S0", "K", "sigma", "T"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be positive, got {v}")
        if not np.isfinite(self.r):
            raise DomainError("r must be finite")


def _d1d2(p: MarketParams):
    vol = p.sigma * np.sqrt(p.T)
    d1 = (np.log(p.S0 / p.K) + (p.r + 0.5 * p.sigma**2) * p.T) / vol
    return d1, d1 - vol


def black_scholes_call(p: MarketParams) -> float:
    """S0 N(d1) - K exp(-rT) N(d2)."""
    d1, d2 = _d1d2(p)
    return float(p.S0 * ndtr(d1) - p.K * np.exp(-p.r * p.T) * ndtr(d2))


def black_scholes_put(p: MarketParams) -> float:
    """K exp(-rT) N(-d2) - S0 N(-d1)."""
    d1, d2 = _d1d2(p)
    return float(p.K * np.exp(-p.r * p.T) * ndtr(-d2) - p.S0 * ndtr(-d1))


# ------------------------------------------------------------------ payoffs

PAYOFFS = ("call", "put", "digital", "custom")


@dataclass(frozen=True)
class PayoffSpec:
    """A European payoff.  ``growth`` declares the polynomial growth degree of a custom ``f``."""

    variant: str
    K: Optional[float] = None
    f: Optional[Callable] = None
    smooth: bool = False
    growth: float = 1.0
    name: Optional[str] = None

    def __post_init__(self):
        if self.variant not in PAYOFFS:
            raise DomainError(f"unknown payoff {self.variant!r}")
        if self.variant == "custom":
            if self.f is None:
                raise DomainError("a custom payoff needs f")
        elif self.K is None or not np.isfinite(self.K):
            raise DomainError(f"{self.variant} payoff needs a finite strike K")

    @classmethod
    def call(cls, K):
        return cls("call", K=float(K))

    @classmethod
    def put(cls, K):
        return cls("put", K=float(K))

    @classmethod
    def digital(cls, K):
        return cls("digital", K=float(K))

    @classmethod
    def custom(cls, f, smooth=True, growth=1.0, name="custom"):
        return cls("custom", f=f, smooth=smooth, growth=growth, name=name)

    @property
    def label(self):
        if self.variant == "custom":
            return self.name or "custom"
        return f"{self.variant}(K={self.K:g})"

    @property
    def kinks(self):
        return () if self.K is None else (self.K,)

    def __call__(self, x):
        x = np.asarray(x, float)
        if self.variant == "call":
            return np.maximum(x - self.K, 0.0)
        if self.variant == "put":
            return np.maximum(self.K - x, 0.0)
        if self.variant == "digital":
            return (x > self.K).astype(float)
        return np.asarray(self.f(x), float) * np.ones_like(x)


# --------------------------------------------------------------- oracles


# The standard normal density is below 1e-300 outside this range.
Z_RANGE = 37.0


def _expect_weighted(h, breaks):
    """int h(z) phi(z) dz over |z| <= Z_RANGE, split at ``breaks``."""
    inner = sorted(b for b in breaks if np.isfinite(b) and abs(b) < Z_RANGE)
    pts = [-Z_RANGE, *inner, Z_RANGE]
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        val, _ = integrate.quad(
            lambda z: h(z) * np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi), a, b, epsabs=1e-14, epsrel=1e-12, limit=400
        )
        total += val
    return float(total)


def gaussian_delta_oracle(payoff, x, var):
    """d/dx E[g(x + Z)] for Z ~ N(0, var), by 1-d quadrature of E[g(x + sZ) Z] / s."""
    s = np.sqrt(var)
    breaks = [(k - x) / s for k in getattr(payoff, "kinks", ())]
    return _expect_weighted(lambda z: float(payoff(x + s * z)) * z, breaks) / s


def lognormal_delta_oracle(payoff, v0, var):
    """d/dv0 E[f(v0 exp(Z))] for Z ~ N(0, var), by 1-d quadrature."""
    s = np.sqrt(var)
    breaks = [np.log(k / v0) / s for k in getattr(payoff, "kinks", ()) if k > 0]
    return _expect_weighted(lambda z: float(payoff(v0 * np.exp(s * z))) * z, breaks) / (s * v0)


# ------------------------------------------------------------ reports


@dataclass(frozen=True)
class GreeksReport:
    """A Monte Carlo delta with its finite-difference and oracle comparisons.

    ``z_fd`` uses the paired difference of the per-path samples, so the
    common random numbers are accounted for.
    """

    method: str
    estimate: MCEstimate
    oracle: Optional[float] = None
    fd: Optional[MCEstimate] = None
    z_oracle: Optional[float] = None
    z_fd: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)
    z_gate: float = 4.0
    per_path: Optional[dict] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.estimate.stderr > 0:
            raise VarianceBlowup(f"{self.method}: the estimator has zero variance")

    @property
    def passed(self):
        zs = [z for z in (self.z_oracle, self.z_fd) if z is not None]
        return all(abs(z) < self.z_gate for z in zs)

    def as_dict(self):
        out = {
            "method": self.method,
            "value": self.estimate.mean,
            "stderr": self.estimate.stderr,
            "paths": self.estimate.n,
            "pass": self.passed,
            "diagnostics": dict(self.diagnostics),
        }
        if self.oracle is not None:
            out["oracle"] = self.oracle
            out["z_oracle"] = self.z_oracle
        if self.fd is not None:
            out["fd_value"] = self.fd.mean
            out["fd_stderr"] = self.fd.stderr
            out["z_fd"] = self.z_fd
        return out


def fd_delta(pricer, x, bump=None, scale=None):
    """Central difference (P(x+b) - P(x-b)) / 2b from per-path samples.

    ``pricer(x)`` must return the per-path payoffs for the level ``x`` on a
    fixed set of paths.  ``bump`` defaults to ``1e-3 * scale`` with ``scale``
    defaulting to max(|x|, 1).
    """
    if bump is None:
        bump = 1e-3 * (max(abs(x), 1.0) if scale is None else scale)
    if not bump > 0:
        raise DomainError("bump must be positive")
    samples = (np.asarray(pricer(x + bump), float) - np.asarray(pricer(x - bump), float)) / (2 * bump)
    return MCEstimate.from_samples(samples), samples


def _report(method, samples, fd_samples, oracle, diagnostics, z_gate):
    est = MCEstimate.from_samples(samples).check_variance(method, ratio=1.0)
    fd = MCEstimate.from_samples(fd_samples)
    z_fd = difference(samples, fd_samples).zscore if fd_samples is not None else None
    z_or = None
    if oracle is not None:
        est = est.with_reference(oracle)
        z_or = zscore(est.mean - oracle, est.stderr, abs(oracle))
    per_path = {"estimator": np.asarray(samples, float), "fd": np.asarray(fd_samples, float)}
    return GreeksReport(method, est, oracle, fd, z_or, z_fd, diagnostics, z_gate, per_path)


# ----------------------------------------------------------- rough variance


@dataclass(frozen=True)
class RoughVariance:
    """Per-path node values of v0 exp(B^F) and the number of clamped exponents."""

    values: GridFunction
    clamped: int


def rough_variance_path(spec: KernelSpec, v0, fg: PathBatch) -> RoughVariance:
    """v_t = v0 exp(B^F_t) on every node of every path.

    Exponents are clamped to [-700, 700]; the number of clamped entries is
    reported instead of raising.
    """
    if not (np.isfinite(v0) and v0 > 0):
        raise DomainError("v0 must be positive")
    if fg.kind != FGAUSSIAN:
        raise DomainError("rough_variance_path needs an F-Gaussian batch")
    x = fg.nodes
    clamped = int(np.count_nonzero(np.abs(x) > CLAMP))
    v = v0 * np.exp(np.clip(x, -CLAMP, CLAMP))
    return RoughVariance(GridFunction(fg.grid, v, NODE), clamped)


def malliavin_deriv_v(spec: KernelSpec, v_t, t, s):
    """D_s v_t = v_t F(t, s) for s <= t."""
    if s > t:
        raise DomainError("need s <= t")
    return np.asarray(v_t, float) * eval_kernel(spec, t, s)


def malliavin_deriv_inv_v(spec: KernelSpec, v_t, t, s):
    """D_s (1/v_t) = -F(t, s) / v_t for s <= t."""
    if s > t:
        raise DomainError("need s <= t")
    return -eval_kernel(spec, t, s) / np.asarray(v_t, float)


def directional_derivative_v(spec: KernelSpec, v0, fg: PathBatch, hdot: GridFunction, t_index, eps=1e-6):
    """Finite-difference and analytic derivative of v_t along the shift K_F hdot.

    Returns ``(fd, analytic)`` per path; the analytic value is
    v_t (K_F hdot)(t), the pairing of D v_t with hdot.
    """
    hF = apply(build_KF(spec, fg.grid), hdot).values[t_index]
    x = fg.nodes[:, t_index]
    fd = (v0 * np.exp(x + eps * hF) - v0 * np.exp(x)) / eps
    return fd, v0 * np.exp(x) * hF


def price_roughvol(spec: KernelSpec, payoff: PayoffSpec, v0, t, grid, rng: RngConfig, n_paths):
    """Undiscounted E[f(v_t)] by Volterra sampling."""
    i = _node_index(grid, t)
    _, fg = sample_fgaussian(spec, grid, rng, n_paths)
    v = rough_variance_path(spec, v0, fg)
    return MCEstimate.from_samples(payoff(v.values.values[:, i])), v.clamped


def _node_index(grid: TimeGrid, t):
    i, off = grid.snap(t)
    if i == 0 or abs(off) > 1e-9 * grid.dt:
        raise DomainError(f"t={t} is not a positive node of the grid")
    return i


# ------------------------------------------------------------------ BEL


def bel_delta(
    spec: KernelSpec,
    payoff,
    x,
    grid: TimeGrid,
    rng: RngConfig = None,
    n_paths=100_000,
    batch=None,
    bump=None,
    oracle=None,
    z_gate=4.0,
):
    """d/dx E[g(x + B^F_T)] = E[g(x + B^F_T) w] / T0 with T0 = int_0^T F(T, s) ds.

    The weight w is computed twice: as the B^F-integral of (K_F*)^-1 1 and
    as B_T of the driving Brownian path, which it equals in the continuum.
    The estimate uses the second; the first and the RMS gap between the
    weights go to the diagnostics.  ``oracle="gaussian"`` adds the 1-d
    quadrature delta for a Gaussian with variance R_F(T, T).

    Raises
    ------
    DegenerateT0
        If |T0| < 1e-12.
    """
    T = grid.T
    T0 = cell_integral(spec, T, 0.0, T)
    if abs(T0) < T0_MIN:
        raise DegenerateT0(f"T0 = {T0:.3g} is too small for the BEL weight")
    if batch is None:
        bm, fg = sample_fgaussian(spec, grid, rng, n_paths)
    else:
        bm = batch
        fg = volterra_transform(spec, bm)
    XT = fg.nodes[:, -1]
    w_collapsed = bm.nodes[:, -1]
    psi = apply(build_KF_star_inv(spec, grid), GridFunction.constant(grid, 1.0))
    w_operator = bf_integral(psi, fg)

    gx = payoff(x + XT)
    samples = gx * w_collapsed / T0
    op_samples = gx * w_operator / T0

    def pricer(y):
        return payoff(y + XT)

    _, fd_samples = fd_delta(pricer, x, bump)
    ref = None
    if oracle == "gaussian":
        ref = gaussian_delta_oracle(payoff, x, covariance(spec, T, T))
    elif oracle is not None:
        ref = float(oracle)
    op = MCEstimate.from_samples(op_samples)
    diag = {
        "T0": T0,
        "T0_discrete": float(build_KF(spec, grid).dense()[-1].sum()),
        "operator_value": op.mean,
        "operator_stderr": op.stderr,
        "z_routes": difference(samples, op_samples).zscore,
        "weight_rms": float(np.sqrt(np.mean((w_operator - w_collapsed) ** 2))),
    }
    return _report("bel", samples, fd_samples, ref, diag, z_gate)


def bel_weight_rms(spec: KernelSpec, grid: TimeGrid):
    """Exact RMS of the gap between the two BEL weights on ``grid``.

    Both weights are linear in the driving noise, so the RMS is the L2 norm
    of K_F* (K_F*)^-1 1 - 1 with the telescoped adjoint.
    """
    one = GridFunction.constant(grid, 1.0)
    back = apply(build_KF_star(spec, grid), apply(build_KF_star_inv(spec, grid), one))
    return float((back - one).l2_norm())


# ------------------------------------------------------------- Bismut v0


def reciprocal_cell_means(spec: KernelSpec, t, m):
    """Cell averages of 1/F(t, .) on the uniform partition of [0, t] into m cells.

    Raises
    ------
    NonIntegrableReciprocal
        If a cell average is not finite.
    """
    h = t / m
    x, w = quad.gauss_legendre(ORDER)
    j = np.arange(m)
    s = h * (j[:, None] + x)
    d = h * ((m - j)[:, None] - x)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = (1.0 / spec._F(np.full_like(s, t), s, d)) @ w
        right = None if spec.diag_power is None else -spec.diag_power
        left = None if spec.origin_power is None else -spec.origin_power
        for k, lp, rp in ((m - 1, None, right), (0, left, None)):
            if m == 1:
                lp, rp = left, right
            if lp is None and rp is None:
                continue
            try:
                r = quad.rule(k * h, (k + 1) * h, lp, rp, ORDER, quad.MAX_LEVELS)
            except (FGaussError, ValueError, FloatingPointError) as exc:
                raise NonIntegrableReciprocal(f"1/F(t, .) is not integrable near cell {k}: {exc}") from None
            out[k] = (1.0 / spec._F(np.full_like(r.x, t), r.x, (m - 1 - k) * h + r.dr)) @ r.w / h
    if not np.all(np.isfinite(out)):
        raise NonIntegrableReciprocal("1/F(t, .) has non-finite cell averages")
    return out


def reciprocal_energy_check(spec: KernelSpec, t, m0=16, levels=4):
    """Energies sum(u_j^2) h of the reciprocal weight under repeated halving of h.

    The increments shrink geometrically when int 1/F^2 is finite and stall
    (log divergence) or grow otherwise.  Returns the energies.

    Raises
    ------
    NonIntegrableReciprocal
        If the last increment is at least 0.97 times the one before.
    """
    S = []
    for k in range(levels):
        m = m0 * 2**k
        u = reciprocal_cell_means(spec, t, m)
        S.append(float(np.sum(u**2) * t / m))
    S = np.array(S)
    inc = np.diff(S)
    if not np.all(np.isfinite(S)):
        raise NonIntegrableReciprocal("reciprocal-kernel energy is not finite")
    if inc[-1] > 1e-9 * S[-1] and inc[-1] >= DIVERGENCE_RATIO * inc[-2]:
        raise NonIntegrableReciprocal(
            f"int_0^t F(t,s)^-2 ds appears to diverge (energies {', '.join(f'{v:.4g}' for v in S)})"
        )
    return S


def bismut_v0_delta(
    spec: KernelSpec,
    payoff,
    v0,
    t,
    grid: TimeGrid,
    rng: RngConfig = None,
    n_paths=100_000,
    batch=None,
    bump=None,
    z_gate=4.0,
):
    """d/dv0 E[f(v_t)] by the weight W = int_0^t dB_s / F(t, s).

    The estimate is E[f(v_t) W] / (v0 t).  The same average divided by v0
    only (no 1/t) is reported as ``literal_value``, together with its ratio
    to the reference (the oracle if present, else the finite difference).
    Constant kernels get the lognormal quadrature oracle.
    """
    if not (np.isfinite(v0) and v0 > 0):
        raise DomainError("v0 must be positive")
    i = _node_index(grid, t)
    t = float(grid.nodes[i])
    energies = reciprocal_energy_check(spec, t, m0=max(i, 16))
    u = reciprocal_cell_means(spec, t, i)
    if batch is None:
        bm, fg = sample_fgaussian(spec, grid, rng, n_paths)
    else:
        bm, fg = batch, volterra_transform(spec, batch)
    W = bm.values[:, :i] @ u
    Xt = fg.nodes[:, i]
    fv = payoff(v0 * np.exp(np.clip(Xt, -CLAMP, CLAMP)))
    samples = fv * W / (v0 * t)

    def pricer(y):
        return payoff(y * np.exp(np.clip(Xt, -CLAMP, CLAMP)))

    _, fd_samples = fd_delta(pricer, v0, bump)
    oracle = None
    if isinstance(spec, Constant):
        oracle = lognormal_delta_oracle(payoff, v0, spec.c**2 * t)
    literal = MCEstimate.from_samples(fv * W / v0)
    ref = oracle if oracle is not None else float(np.mean(fd_samples))
    L = build_KF(spec, grid).dense()[i, :i]
    diag = {
        "t": t,
        "literal_value": literal.mean,
        "literal_stderr": literal.stderr,
        "literal_factor": literal.mean / ref if ref != 0 else None,
        "literal_factor_stderr": literal.stderr / abs(ref) if ref != 0 else None,
        "weight_covariance_ratio": float(L @ u / t),
        "reciprocal_energy": float(energies[-1]),
        "clamped": int(np.count_nonzero(np.abs(Xt) > CLAMP)),
    }
    return _report("bismut-v0", samples, fd_samples, oracle, diag, z_gate)


__all__ = [
    "MarketParams",
    "PayoffSpec",
    "GreeksReport",
    "RoughVariance",
    "black_scholes_call",
    "black_scholes_put",
    "gaussian_delta_oracle",
    "lognormal_delta_oracle",
    "fd_delta",
    "rough_variance_path",
    "malliavin_deriv_v",
    "malliavin_deriv_inv_v",
    "directional_derivative_v",
    "price_roughvol",
    "bel_delta",
    "bel_weight_rms",
    "reciprocal_cell_means",
    "reciprocal_energy_check",
    "bismut_v0_delta",
]
