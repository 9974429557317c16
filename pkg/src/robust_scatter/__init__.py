"""Tunable high-breakdown S-estimators of multivariate location, scatter,
and shape for elliptical distributions, with asymptotic-efficiency tooling,
a Monte Carlo experiment harness, and a minimum-variance portfolio
application.
"""

from ._core import BACKEND
from .elliptical import EllipticalModel, Family, GeneratingFunction, mahalanobis, phi_eval
from .kernels import (
    BisquareKernel,
    MleKernel,
    QRange,
    RockeKernel,
    ShrKernel,
    SqKernel,
    SqType,
    rejection_points,
    valid_q_range,
)
from .solver import (
    FitResult,
    b_max_breakdown,
    breakdown_point,
    fit_mle,
    fit_mm_shr,
    fit_s,
    initial_estimate,
    m_scale,
    scatter_from_shape,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "__version__",
    "EllipticalModel",
    "Family",
    "GeneratingFunction",
    "mahalanobis",
    "phi_eval",
    "BisquareKernel",
    "MleKernel",
    "QRange",
    "RockeKernel",
    "ShrKernel",
    "SqKernel",
    "SqType",
    "rejection_points",
    "valid_q_range",
    "FitResult",
    "b_max_breakdown",
    "breakdown_point",
    "fit_mle",
    "fit_mm_shr",
    "fit_s",
    "initial_estimate",
    "m_scale",
    "scatter_from_shape",
]
