"""Numeric core with two interchangeable lanes.

The compiled lane (``_speedups``, Cython) is preferred when it imported
cleanly; the pure-numpy lane (``pure``) is the reference implementation and
the fallback.  Set ``ROBUST_SCATTER_PURE=1`` to force the pure lane, e.g. to
benchmark one lane against the other (``benchmarks/bench_core.py``).

Both lanes implement the same surface: ``phi_log_ratios``, ``sq_tilde``,
``rho``, ``weight``, ``m_scale`` plus the ``FAM_*``/``KIND_*``/``KP_*``
constants re-exported here from the pure lane.
"""

import os

from .pure import (  # noqa: F401
    FAM_GENHYP,
    FAM_KOTZ,
    FAM_PEARSON2,
    FAM_PEARSON7,
    KIND_BISQUARE,
    KIND_MLE,
    KIND_ROCKE,
    KIND_SHR,
    KIND_SQ,
    KIND_SQ1,
    KP_A,
    KP_C,
    KP_F0,
    KP_F1,
    KP_F2,
    KP_FAM,
    KP_GAMMA,
    KP_KIND,
    KP_Q,
    KP_RTA,
    KP_S1,
    KP_SIZE,
    KP_SP,
)
from . import pure

if os.environ.get("ROBUST_SCATTER_PURE", "0") == "1":
    _impl = pure
    BACKEND = "pure"
else:
    try:
        from . import _speedups as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = pure
        BACKEND = "pure"

phi_log_ratios = _impl.phi_log_ratios
sq_tilde = _impl.sq_tilde
rho = _impl.rho
weight = _impl.weight
m_scale = _impl.m_scale
mean_rho = _impl.mean_rho
ratios1 = _impl.ratios1
rho1 = _impl.rho1
weight1 = _impl.weight1
