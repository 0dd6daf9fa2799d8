"""Monte Carlo estimates and the small statistical tests used by the checks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateInput, VarianceBlowup


@dataclass(frozen=True)
class MCEstimate:
    """Sample mean with its standard error.

    ``stderr`` is the sample standard deviation divided by sqrt(n).
    """

    mean: float
    stderr: float
    n: int
    reference: Optional[float] = None

    def __post_init__(self):
        if self.n < 2:
            raise DegenerateInput("a Monte Carlo estimate needs at least two samples")

    @classmethod
    def from_samples(cls, x, reference=None):
        x = np.asarray(x, dtype=float).ravel()
        if x.size < 2:
            raise DegenerateInput("a Monte Carlo estimate needs at least two samples")
        return cls(float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size)), int(x.size), reference)

    @property
    def zscore(self):
        if self.reference is None:
            return None
        return zscore(self.mean - self.reference, self.stderr, abs(self.reference))

    def with_reference(self, reference):
        return MCEstimate(self.mean, self.stderr, self.n, float(reference))

    def check_variance(self, what="estimator", ratio=0.1):
        """Raise VarianceBlowup if stderr exceeds ``ratio * (|mean| + 1)``."""
        if not np.isfinite(self.stderr) or self.stderr > ratio * (abs(self.mean) + 1.0):
            raise VarianceBlowup(
                f"{what}: stderr {self.stderr:.3g} too large for mean {self.mean:.3g}"
            )
        return self

    def as_dict(self):
        out = {"mean": self.mean, "stderr": self.stderr, "n": self.n}
        if self.reference is not None:
            out["reference"] = self.reference
            out["z"] = self.zscore
        return out


def zscore(diff, stderr, scale=1.0):
    """``diff / stderr`` with exact zero-variance cases mapped to 0 or +-inf."""
    if stderr > 0:
        return float(diff / stderr)
    if abs(diff) <= 1e-12 * max(1.0, abs(scale)):
        return 0.0
    return float(np.copysign(np.inf, diff))


def difference(x, y, reference=0.0):
    """Estimate of E[x - y] from paired samples (common random numbers)."""
    return MCEstimate.from_samples(np.asarray(x, float) - np.asarray(y, float), reference)


def covariance_z(X, R):
    """Componentwise z-scores of the batch covariance of ``X`` (paths x dims) against ``R``.

    Uses the known zero mean of the process.  The standard error of each
    entry comes from the sample variance of the products.
    """
    X = np.asarray(X, float)
    n = X.shape[0]
    prod = X[:, :, None] * X[:, None, :]
    mean = prod.mean(axis=0)
    se = prod.std(axis=0, ddof=1) / np.sqrt(n)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, (mean - R) / se, np.where(np.isclose(mean, R, atol=1e-12), 0.0, np.inf))
    return mean, se, z


def normality_z(x):
    """z-scores of sample skewness and excess kurtosis under normality."""
    x = np.asarray(x, float)
    n = x.size
    c = x - x.mean()
    m2 = np.mean(c**2)
    if m2 == 0:
        raise DegenerateInput("normality test on constant samples")
    skew = np.mean(c**3) / m2**1.5
    kurt = np.mean(c**4) / m2**2 - 3.0
    return float(skew / np.sqrt(6.0 / n)), float(kurt / np.sqrt(24.0 / n))


def _energy_stat(a, b):
    def mean_dist(u, v):
        return np.mean(np.linalg.norm(u[:, None, :] - v[None, :, :], axis=-1))

    return 2 * mean_dist(a, b) - mean_dist(a, a) - mean_dist(b, b)


def energy_distance_z(a, b, size=1000, permutations=200, seed=0):
    """Two-sample energy-distance statistic standardized by a permutation null.

    Both samples are subsampled to ``size`` rows (the first rows are used so
    the result is deterministic).  Returns (statistic, z).
    """
    a = np.asarray(a, float)[:size]
    b = np.asarray(b, float)[:size]
    if a.ndim == 1:
        a, b = a[:, None], b[:, None]
    obs = _energy_stat(a, b)
    pooled = np.vstack([a, b])
    rng = np.random.default_rng(seed)
    null = np.empty(permutations)
    for k in range(permutations):
        p = rng.permutation(pooled.shape[0])
        null[k] = _energy_stat(pooled[p[: a.shape[0]]], pooled[p[a.shape[0] :]])
    return float(obs), float((obs - null.mean()) / null.std(ddof=1))


def loglog_slope(ns, errors):
    """Empirical convergence order: minus the fitted slope of log error vs log n."""
    return float(-np.polyfit(np.log(np.asarray(ns, float)), np.log(np.asarray(errors, float)), 1)[0])
