"""Volterra kernels F(t, s), their time derivatives and covariances.

Every kernel is an immutable dataclass exposing a vectorized raw evaluator
``_F(t, s)`` valid for ``0 <= s < t`` together with the exponents of its
endpoint behaviour::

    F(t, s) ~ (t - s)**diag_power   as s -> t
    F(t, s) ~ s**origin_power       as s -> 0

``None`` marks a smooth endpoint.  The exponents drive the graded quadrature
used for cell integrals and covariances.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy.special import beta as beta_fn
from scipy.special import gamma, hyp2f1

from . import quadrature as quad
from .errors import DomainError, NonFinite, NonIntegrable, QuadratureFailure

RealFunction = Callable[[np.ndarray], np.ndarray]


def _one(x):
    return np.ones_like(np.asarray(x, dtype=float))


def gap_aware(fn):
    """Mark a two-time function as accepting ``d = t - s`` as a keyword."""
    fn.gap_aware = True
    return fn


def call_gap(fn, t, s, d=None):
    """Evaluate ``fn(t, s)``, forwarding the exact gap when ``fn`` supports it."""
    if d is not None and getattr(fn, "gap_aware", False):
        return fn(t, s, d=d)
    return fn(t, s)


def _gap(t, s, d):
    return t - s if d is None else d


@dataclass(frozen=True)
class InversionData:
    """Analytic data for inverting K_F and its adjoint.

    Parameters
    ----------
    Theta : callable (t, s)
        Kernel of the fractional-type integral used by the adjoint inverse.
        Must satisfy the shift invariance dTheta/dt + dTheta/ds = 0.
    zeta1, zeta2 : callable t
        Scalar weights of the two reduction identities.
    Phi : callable (t, s), optional
        Kernel applied by the forward inverse; ``None`` means the identity.
    xi : callable t, optional
        Divisor of the forward inverse.
    differentiate_first : bool
        If true the forward inverse differentiates its input before applying
        ``Phi`` (fractional kernels whose first derivative satisfies the
        reduction identity rather than the kernel itself).
    theta_power, phi_power : float or None
        Exponents of the diagonal singularities of ``Theta`` and ``Phi``.
    zeta1_origin, zeta2_origin, xi_origin, phi_origin : float or None
        Exponents p of the behaviour ~ s**p at s = 0 of the weights and of
        ``Phi(t, s)`` in its second argument; ``None`` means smooth.
    """

    Theta: Callable
    zeta1: RealFunction
    zeta2: RealFunction
    Phi: Optional[Callable] = None
    xi: Optional[RealFunction] = None
    differentiate_first: bool = False
    theta_power: Optional[float] = None
    phi_power: Optional[float] = None
    zeta1_origin: Optional[float] = None
    zeta2_origin: Optional[float] = None
    xi_origin: Optional[float] = None
    phi_origin: Optional[float] = None

    @property
    def has_forward(self):
        return self.xi is not None

    def rescaled(self, c):
        """Return data with Theta and zeta1 multiplied by ``c``.

        Both reduction identities are invariant under this change; it moves a
        normalisation constant between Theta and zeta1.
        """
        th, z1 = self.Theta, self.zeta1

        @gap_aware
        def theta(t, s, d=None):
            return c * call_gap(th, t, s, d)

        return replace(self, Theta=theta, zeta1=lambda t: c * z1(t))


@gap_aware
def _unit_theta(t, s, d=None):
    return _one(np.asarray(t, float) - np.asarray(s, float))


_UNIT_DATA = InversionData(
    Theta=_unit_theta,
    zeta1=_one,
    zeta2=_one,
    xi=_one,
)


class KernelSpec:
    """Common interface of the kernel variants."""

    T: float
    diag_power: Optional[float] = None
    origin_power: Optional[float] = None
    dF_dt_vanishes: bool = False

    @property
    def variant(self):
        return type(self).__name__

    @property
    def horizon(self):
        return self.T

    @property
    def inversion_data(self) -> Optional[InversionData]:
        return None

    def _F(self, t, s, d=None):
        """Raw kernel for s < t; ``d`` optionally supplies t - s exactly."""
        raise NotImplementedError

    def _dF_dt(self, t, s, d=None):
        raise NotImplementedError

    def diag(self, t):
        """F(t, t); ``inf`` where the kernel blows up on the diagonal."""
        p = self.diag_power
        t = np.asarray(t, dtype=float)
        if p is None:
            return self._F(t, t)
        return np.full(t.shape, 0.0 if p > 0 else np.inf)

    # public, masked evaluators -------------------------------------------
    def __call__(self, t, s):
        return eval_kernel(self, t, s)

    def _check_domain(self, *times):
        for x in times:
            x = np.asarray(x, dtype=float)
            if np.any(x < 0) or np.any(x > self.T * (1 + 1e-12)):
                raise DomainError(f"time outside [0, {self.T}]")


def _validate_T(T):
    if not (np.isfinite(T) and T > 0):
        raise DomainError(f"horizon T must be positive, got {T}")


@dataclass(frozen=True)
class Constant(KernelSpec):
    """F(t, s) = c for s <= t."""

    c: float
    T: float = 1.0

    def __post_init__(self):
        _validate_T(self.T)
        if not np.isfinite(self.c) or self.c == 0:
            raise DomainError("Constant kernel needs a finite non-zero c")

    dF_dt_vanishes = True

    def _F(self, t, s, d=None):
        return np.full(np.broadcast(np.asarray(t), np.asarray(s)).shape, float(self.c))

    def _dF_dt(self, t, s, d=None):
        return np.zeros(np.broadcast(np.asarray(t), np.asarray(s)).shape)

    @cached_property
    def inversion_data(self):
        c = float(self.c)
        return InversionData(
            Theta=_UNIT_DATA.Theta,
            zeta1=_one,
            zeta2=lambda t: c * _one(t),
            xi=lambda t: c * _one(t),
        )


@dataclass(frozen=True)
class Identity(Constant):
    """Brownian kernel F(t, s) = 1 for s <= t."""

    c: float = field(default=1.0, init=False)
    T: float = 1.0


@dataclass(frozen=True)
class Separable(KernelSpec):
    """F(t, s) = f(s) for s <= t.

    ``origin_power`` declares f(s) ~ s**p near 0 if f is not smooth there.
    """

    f: RealFunction
    T: float = 1.0
    origin_power: Optional[float] = None

    dF_dt_vanishes = True

    def __post_init__(self):
        _validate_T(self.T)

    def _F(self, t, s, d=None):
        t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
        return np.asarray(self.f(s), dtype=float) * np.ones_like(t)

    def _dF_dt(self, t, s, d=None):
        return np.zeros(np.broadcast(np.asarray(t), np.asarray(s)).shape)

    def diag(self, t):
        return np.asarray(self.f(np.asarray(t, float)), dtype=float)

    @cached_property
    def inversion_data(self):
        f = self.f
        p = self.origin_power
        return InversionData(
            Theta=_UNIT_DATA.Theta, zeta1=_one, zeta2=f, xi=f, zeta2_origin=p, xi_origin=p
        )


_V_ORDER = 24


@dataclass(frozen=True)
class RiemannLiouville(KernelSpec):
    """Fractional-integral kernel

    F(t, s) = scale / Gamma(alpha) * f1(s) * int_s^t (u - s)**(alpha - 1) f2(u) du.

    ``f1``/``f2`` default to the constant 1, which enables closed forms.
    ``f1_origin_power`` declares f1(s) ~ s**p near 0.
    """

    alpha: float
    f1: Optional[RealFunction] = None
    f2: Optional[RealFunction] = None
    T: float = 1.0
    scale: float = 1.0
    f1_origin_power: Optional[float] = None
    f2_origin_power: Optional[float] = None

    def __post_init__(self):
        _validate_T(self.T)
        if not 0 < self.alpha < 1:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")

    @property
    def diag_power(self):
        return float(self.alpha)

    @property
    def origin_power(self):
        return self.f1_origin_power

    def _f1(self, s):
        return _one(s) if self.f1 is None else np.asarray(self.f1(s), dtype=float)

    def _f2(self, t):
        return _one(t) if self.f2 is None else np.asarray(self.f2(t), dtype=float)

    def _inner(self, t, s, d):
        """int_s^t (u - s)**(alpha-1) f2(u) du via u = s + v**(1/alpha)."""
        a = self.alpha
        d = np.maximum(d, 0.0)
        if self.f2 is None:
            return d**a / a
        vx, vw = quad.gauss_legendre(_V_ORDER)
        top = d**a
        v = top[..., None] * vx
        u = s[..., None] + v ** (1.0 / a)
        return top * (self._f2(u) @ vw) / a

    def _F(self, t, s, d=None):
        t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
        d = np.broadcast_to(_gap(t, s, d), t.shape)
        c = self.scale / gamma(self.alpha)
        with np.errstate(divide="ignore", invalid="ignore"):
            return c * self._f1(s) * self._inner(t, s, d)

    def _dF_dt(self, t, s, d=None):
        t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
        c = self.scale / gamma(self.alpha)
        with np.errstate(divide="ignore", invalid="ignore"):
            return c * _gap(t, s, d) ** (self.alpha - 1.0) * self._f1(s) * self._f2(t)

    @cached_property
    def inversion_data(self):
        a, sc = self.alpha, self.scale
        g1 = gamma(1.0 - a)
        f1, f2 = self._f1, self._f2

        @gap_aware
        def theta(t, s, d=None):
            t, s = np.asarray(t, float), np.asarray(s, float)
            with np.errstate(divide="ignore", invalid="ignore"):
                return _gap(t, s, d) ** (-a) / g1

        @gap_aware
        def phi(t, s, d=None):
            t, s = np.asarray(t, float), np.asarray(s, float)
            with np.errstate(divide="ignore", invalid="ignore"):
                return _gap(t, s, d) ** (-a) / f2(s)

        return InversionData(
            Theta=theta,
            zeta1=f1,
            zeta2=lambda t: sc * f2(t),
            Phi=phi,
            xi=lambda t: sc * g1 * f1(t),
            differentiate_first=True,
            theta_power=-a,
            phi_power=-a,
            zeta1_origin=self.f1_origin_power,
            zeta2_origin=self.f2_origin_power,
            xi_origin=self.f1_origin_power,
            phi_origin=None if self.f2_origin_power is None else -self.f2_origin_power,
        )


def _hyp_one_minus(a, b, c, y):
    """2F1(a, b; c; 1 - y) for y in (0, 1], accurate as y -> 0.

    Uses the connection formula about 1 for small ``y`` (c - a - b must not
    be an integer).
    """
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    near = y < 0.5
    far = ~near
    out[far] = hyp2f1(a, b, c, 1.0 - y[far])
    if np.any(near):
        yn = y[near]
        d = c - a - b
        g1 = gamma(c) * gamma(d) / (gamma(c - a) * gamma(c - b))
        g2 = gamma(c) * gamma(-d) / (gamma(a) * gamma(b))
        out[near] = g1 * hyp2f1(a, b, 1.0 - d, yn) + yn**d * g2 * hyp2f1(c - a, c - b, 1.0 + d, yn)
    return out


def default_c_H(H):
    """Standard normalisation for H > 1/2, giving Var(B_1) = 1."""
    return float(np.sqrt(H * (2 * H - 1) / beta_fn(2 - 2 * H, H - 0.5)))


@dataclass(frozen=True)
class FbmLiouville(KernelSpec):
    """Kernel of fractional Brownian motion on [0, T].

    For H > 1/2 ``c_H`` scales the integral form; for H < 1/2 ``b_H`` scales
    the two-term form; H = 1/2 is the indicator kernel.  Defaults give
    Var(B_1) = 1 (``b_H`` is normalised numerically).
    """

    H: float
    c_H: Optional[float] = None
    b_H: Optional[float] = None
    T: float = 1.0

    def __post_init__(self):
        _validate_T(self.T)
        if not 0 < self.H < 1:
            raise DomainError(f"H must lie in (0, 1), got {self.H}")
        if self.H > 0.5 and self.c_H is None:
            object.__setattr__(self, "c_H", default_c_H(self.H))
        if self.H < 0.5 and self.b_H is None:
            object.__setattr__(self, "b_H", 1.0)
            r11 = _unit_variance(self)
            object.__setattr__(self, "b_H", 1.0 / np.sqrt(r11))

    @property
    def diag_power(self):
        return None if self.H == 0.5 else self.H - 0.5

    @property
    def origin_power(self):
        return None if self.H == 0.5 else -abs(self.H - 0.5)

    @property
    def dF_dt_vanishes(self):
        return self.H == 0.5

    def _F(self, t, s, d=None):
        t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
        H = self.H
        if H == 0.5:
            return np.ones_like(t)
        d = np.broadcast_to(_gap(t, s, d), t.shape)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            y = s / t
            a = H - 0.5
            if H > 0.5:
                return self.c_H * d**a * (t / s) ** a / a * _hyp_one_minus(0.5 - H, 1.0, H + 0.5, y)
            inner = d ** (H + 0.5) * t ** (H - 1.5) / (H + 0.5) * _hyp_one_minus(1.5 - H, 1.0, H + 1.5, y)
            return self.b_H * ((t * d / s) ** a - a * s ** (-a) * inner)

    def _dF_dt(self, t, s, d=None):
        t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
        H = self.H
        if H == 0.5:
            return np.zeros_like(t)
        a = H - 0.5
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            base = (t / s) ** a * _gap(t, s, d) ** (a - 1.0)
        return self.c_H * base if H > 0.5 else self.b_H * a * base

    def as_riemann_liouville(self):
        """The H > 1/2 kernel written as a scaled fractional-integral kernel."""
        if self.H <= 0.5:
            raise DomainError("only H > 1/2 has a fractional-integral form")
        H = self.H
        return RiemannLiouville(
            alpha=H - 0.5,
            f1=lambda s: np.asarray(s, float) ** (0.5 - H),
            f2=lambda t: np.asarray(t, float) ** (H - 0.5),
            T=self.T,
            scale=self.c_H * gamma(H - 0.5),
            f1_origin_power=0.5 - H,
            f2_origin_power=H - 0.5,
        )

    @cached_property
    def inversion_data(self):
        if self.H == 0.5:
            return _UNIT_DATA
        if self.H > 0.5:
            return self.as_riemann_liouville().inversion_data
        return None


def _unit_variance(k):
    r = quad.rule(0.0, 1.0, left=2 * k.origin_power, right=2 * k.diag_power, order=24, levels=18)
    return float(r.w @ (k._F(np.ones_like(r.x), r.x, r.dr) ** 2))


@dataclass(frozen=True)
class Custom(KernelSpec):
    """User-supplied kernel.

    Parameters
    ----------
    F, dF_dt : callable (t, s)
        Vectorized kernel and time derivative, valid for s < t.
    inversion : InversionData, optional
    factor : callable t, optional
        Declared factor f in F(t, s) = f(t) * Fhat(t, s).
    """

    F: Callable
    dF_dt: Optional[Callable] = None
    T: float = 1.0
    diag_power: Optional[float] = None
    origin_power: Optional[float] = None
    inversion: Optional[InversionData] = None
    factor: Optional[RealFunction] = None

    def __post_init__(self):
        _validate_T(self.T)

    def _F(self, t, s, d=None):
        t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
        return np.asarray(call_gap(self.F, t, s, d), dtype=float) * np.ones_like(t)

    def _dF_dt(self, t, s, d=None):
        if self.dF_dt is None:
            raise NonIntegrable("custom kernel has no time derivative")
        t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
        return np.asarray(call_gap(self.dF_dt, t, s, d), dtype=float) * np.ones_like(t)

    @property
    def inversion_data(self):
        return self.inversion


# ---------------------------------------------------------------------------
# operations


def eval_kernel(spec: KernelSpec, t, s):
    """F(t, s), zero for s > t.

    Raises
    ------
    NonFinite
        At a singular point (diagonal of H < 1/2 fBm, s = 0 for fBm).
    """
    spec._check_domain(t, s)
    t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
    out = np.zeros(t.shape)
    below = s < t
    if np.any(below):
        out[below] = spec._F(t[below], s[below])
    on = s == t
    if np.any(on):
        out[on] = spec.diag(t[on])
    if not np.all(np.isfinite(out)):
        raise NonFinite("kernel evaluated at a singular point; use cell_integral")
    return float(out) if out.ndim == 0 else out


def eval_dF_dt(spec: KernelSpec, t, s):
    """dF/dt(t, s) for s < t (zero for s > t)."""
    spec._check_domain(t, s)
    t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
    out = np.zeros(t.shape)
    below = s < t
    if np.any(below):
        out[below] = spec._dF_dt(t[below], s[below])
    on = s == t
    if np.any(on) and not spec.dF_dt_vanishes:
        raise NonFinite("dF/dt is singular on the diagonal")
    if not np.all(np.isfinite(out)):
        raise NonFinite("dF/dt evaluated at a singular point")
    return float(out) if out.ndim == 0 else out


def _powers(spec, a, b, t):
    left = spec.origin_power if a == 0 else None
    right = spec.diag_power if b == t else None
    return left, right


def cell_integral(spec: KernelSpec, t, a, b):
    """int_a^b F(t, s) ds for 0 <= a < b <= t."""
    if not (0 <= a < b <= t <= spec.T * (1 + 1e-12)):
        raise DomainError(f"need 0 <= a < b <= t <= T, got a={a}, b={b}, t={t}")
    if isinstance(spec, Constant):
        return spec.c * (b - a)
    if isinstance(spec, FbmLiouville) and spec.H == 0.5:
        return b - a
    if isinstance(spec, RiemannLiouville) and spec.f1 is None and spec.f2 is None:
        al = spec.alpha
        return spec.scale * ((t - a) ** (al + 1) - (t - b) ** (al + 1)) / gamma(al + 2)
    left, right = _powers(spec, a, b, t)
    gap = t - b
    return quad.integrate(
        lambda s, dl, dr: spec._F(np.full_like(s, t), s, dr + gap), a, b, left, right, gaps=True
    )


def covariance(spec: KernelSpec, t, s):
    """R_F(t, s) = int_0^{t^s} F(t, r) F(s, r) dr."""
    spec._check_domain(t, s)
    lo, hi = min(t, s), max(t, s)
    if lo == 0:
        return 0.0
    if isinstance(spec, Constant):
        return spec.c**2 * lo
    if isinstance(spec, FbmLiouville) and spec.H == 0.5:
        return lo
    op = spec.origin_power
    dp = spec.diag_power
    left = None if op is None else 2 * op
    right = None if dp is None else (2 * dp if hi == lo else dp)
    return quad.integrate(
        lambda r, dl, dr: spec._F(np.full_like(r, lo), r, dr) * spec._F(np.full_like(r, hi), r, dr + (hi - lo)),
        0.0,
        lo,
        left,
        right,
        gaps=True,
    )


def phi(spec: KernelSpec, u, v):
    """int_0^{u^v} dF/du(u, r) dF/dv(v, r) dr.

    Raises
    ------
    NonIntegrable
        If the product of derivatives is not integrable near r = u ^ v or 0.
    """
    spec._check_domain(u, v)
    if spec.dF_dt_vanishes:
        return 0.0
    lo, hi = min(u, v), max(u, v)
    if lo <= 0:
        raise DomainError("phi needs u, v > 0")
    dp = spec.diag_power
    right = None
    if dp is not None:
        right = 2 * (dp - 1) if hi == lo else dp - 1
        if right <= -1:
            raise NonIntegrable(f"dF/dt product behaves like (u-r)^{right:g} on the diagonal")
    op = spec.origin_power
    left = None
    if op is not None:
        # dF/dt inherits the origin behaviour of F
        left = 2 * op
        if left <= -1:
            raise NonIntegrable(f"dF/dt product behaves like r^{left:g} at the origin")
    return quad.integrate(
        lambda r, dl, dr: spec._dF_dt(np.full_like(r, lo), r, dr) * spec._dF_dt(np.full_like(r, hi), r, dr + (hi - lo)),
        0.0,
        lo,
        left,
        right,
        gaps=True,
    )


def l2_norm_sq(spec: KernelSpec):
    """||F||^2 over [0, T]^2, i.e. int_0^T R_F(t, t) dt."""
    T = spec.T
    if isinstance(spec, Constant):
        return spec.c**2 * T**2 / 2
    r = quad.rule(0.0, T, left=0.5, order=20, levels=10)
    vals = np.array([covariance(spec, ti, ti) for ti in r.x])
    return float(r.w @ vals)


def dF_dt_l2_norm_sq(spec: KernelSpec):
    """||dF/dt||^2 over the triangle 0 < s < t < T; ``inf`` when divergent."""
    if spec.dF_dt_vanishes:
        return 0.0
    dp = spec.diag_power
    right = None if dp is None else 2 * (dp - 1)
    if right is not None and right <= -1:
        return np.inf
    op = spec.origin_power
    left = None if op is None else 2 * op
    if left is not None and left <= -1:
        return np.inf
    rt = quad.rule(0.0, spec.T, left=0.5, order=20, levels=10)
    inner = [
        quad.integrate(
            lambda r, dl, dr, t=t: spec._dF_dt(np.full_like(r, t), r, dr) ** 2, 0.0, t, left, right, gaps=True
        )
        for t in rt.x
    ]
    return float(rt.w @ np.array(inner))


def sup_diag(spec: KernelSpec, samples=2001):
    """sup_t |F(t, t)| (``inf`` for kernels singular on the diagonal)."""
    dp = spec.diag_power
    if dp is not None:
        return 0.0 if dp > 0 else np.inf
    t = np.linspace(0.0, spec.T, samples)
    return float(np.max(np.abs(spec.diag(t))))


@dataclass(frozen=True)
class ValidationReport:
    square_integrable_F: bool
    nondegenerate_covariance: bool
    dF_dt_square_integrable: bool
    inversion_data_present: bool
    A4_identities_hold: bool
    theta_shift_invariant: bool
    details: dict = field(default_factory=dict)

    @property
    def ok(self):
        return all(
            (
                self.square_integrable_F,
                self.nondegenerate_covariance,
                self.dF_dt_square_integrable,
                self.inversion_data_present,
                self.A4_identities_hold,
                self.theta_shift_invariant,
            )
        )


def _lattice(grid, k=5):
    idx = np.unique(np.linspace(1, grid.n, k).round().astype(int))
    return grid.nodes[idx]


def a4_residuals(spec: KernelSpec, data: InversionData, pairs):
    """Residuals of the two reduction identities at (t, r) pairs with t < r.

    Returns the maximum relative residual of

        Theta(r,t)/zeta1(r) F(r,r) + int_t^r Theta(s,t)/zeta1(s) dF(r,s)/dr ds = zeta2(r)
        Theta(r,t)/zeta2(t) F(t,t) + int_t^r dF(s,t)/ds Theta(r,s)/zeta2(s) ds = zeta1(t)
    """
    dp = spec.diag_power
    tp = data.theta_power
    worst = 0.0
    for t, r in pairs:
        d_r = float(spec.diag(np.array(r)))
        d_t = float(spec.diag(np.array(t)))
        if not (np.isfinite(d_r) and np.isfinite(d_t)):
            return np.inf
        left = tp
        right = None if (dp is None or spec.dF_dt_vanishes) else dp - 1
        if spec.dF_dt_vanishes:
            i1 = i2 = 0.0
        else:
            i1 = quad.integrate(
                lambda s, dl, dr: call_gap(data.Theta, s, np.full_like(s, t), dl)
                / data.zeta1(s)
                * spec._dF_dt(np.full_like(s, r), s, dr),
                t,
                r,
                left,
                right,
                gaps=True,
            )
            i2 = quad.integrate(
                lambda s, dl, dr: spec._dF_dt(s, np.full_like(s, t), dl)
                * call_gap(data.Theta, np.full_like(s, r), s, dr)
                / data.zeta2(s),
                t,
                r,
                right,
                tp,
                gaps=True,
            )
        th = float(data.Theta(np.array(r), np.array(t)))
        lhs1 = (th / float(data.zeta1(np.array(r))) * d_r if d_r != 0 else 0.0) + i1
        lhs2 = (th / float(data.zeta2(np.array(t))) * d_t if d_t != 0 else 0.0) + i2
        rhs1 = float(data.zeta2(np.array(r)))
        rhs2 = float(data.zeta1(np.array(t)))
        worst = max(worst, abs(lhs1 - rhs1) / abs(rhs1), abs(lhs2 - rhs2) / abs(rhs2))
    return worst


def theta_shift_residual(data: InversionData, pairs, h=1e-6):
    """max |dTheta/dr + dTheta/dt| at the (t, r) pairs by central differences."""
    worst = 0.0
    for t, r in pairs:
        th = data.Theta
        d = (th(np.array(r + h), np.array(t)) - th(np.array(r - h), np.array(t))
             + th(np.array(r), np.array(t + h)) - th(np.array(r), np.array(t - h))) / (2 * h)
        scale = max(1.0, abs(float(th(np.array(r), np.array(t)))))
        worst = max(worst, abs(float(d)) / scale)
    return worst


def validate(spec: KernelSpec, grid) -> ValidationReport:
    """Check the standing assumptions on the lattice of ``grid``.

    The report is advisory: failing checks are recorded, not raised.
    """
    details = {}
    try:
        nrm = l2_norm_sq(spec)
        sq = bool(np.isfinite(nrm))
        details["l2_norm_sq"] = nrm
    except (QuadratureFailure, NonFinite) as exc:
        sq = False
        details["l2_norm_sq"] = str(exc)
    lat = _lattice(grid)
    try:
        covs = [covariance(spec, a, b) for a in lat for b in lat]
        nondeg = bool(all(np.isfinite(c) and c != 0 for c in covs))
    except (QuadratureFailure, NonFinite):
        nondeg = False
    try:
        d2 = dF_dt_l2_norm_sq(spec)
    except (QuadratureFailure, NonFinite, NonIntegrable):
        d2 = np.inf
    details["dF_dt_l2_norm_sq"] = d2
    data = spec.inversion_data
    present = data is not None
    a4 = shift = False
    if present:
        pairs = [(a, b) for a in lat for b in lat if 0 < a < b]
        try:
            res = a4_residuals(spec, data, pairs)
            details["A4_residual"] = res
            a4 = bool(res <= 1e-6)
        except (QuadratureFailure, NonFinite, NonIntegrable) as exc:
            details["A4_residual"] = str(exc)
        res = theta_shift_residual(data, pairs)
        details["theta_shift_residual"] = res
        shift = bool(res <= 1e-8)
    return ValidationReport(
        square_integrable_F=sq,
        nondegenerate_covariance=nondeg,
        dF_dt_square_integrable=bool(np.isfinite(d2)),
        inversion_data_present=present,
        A4_identities_hold=a4,
        theta_shift_invariant=shift,
        details=details,
    )
