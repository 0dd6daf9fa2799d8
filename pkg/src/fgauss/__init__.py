"""Gaussian Volterra processes on a uniform grid.

Kernels, discretised operators, path sampling, Girsanov and
integration-by-parts checks, log-Sobolev checks, the associated martingale
and Monte Carlo deltas.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .grid import CELL, NODE, GridFunction, TimeGrid  # noqa: F401
from .kernels import (  # noqa: F401
    Constant,
    Custom,
    FbmLiouville,
    Identity,
    RiemannLiouville,
    Separable,
    covariance,
)
from .sampling import RngConfig, cholesky_sample, sample_brownian, sample_fgaussian, volterra_transform  # noqa: F401
from .stats import MCEstimate  # noqa: F401
