"""Adaptive Gauss-Kronrod quadrature on [a, b], [a, inf), and [0, inf).

Infinite upper limits are compactified with the tangent substitution
``d = a + scale * tan(theta)``, which keeps heavy-tailed integrands
(Cauchy-type ``d^-3/2`` tails) well behaved; ``scale`` moves the knee of
the transform to the integrand's own scale so the adaptive subdivision is
not fighting an endpoint spike.  All routines enforce an absolute tolerance
and raise :class:`~robust_scatter.errors.QuadratureError` when the QUADPACK
error estimate is not credible.
"""

import math
import warnings

import numpy as np
from scipy import integrate

from .errors import QuadratureError

_HALF_PI = 0.5 * math.pi


def quad_ab(f, a, b, atol=1e-10, points=None):
    """Integrate f on the finite interval [a, b]."""
    if b <= a:
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(f, a, b, epsabs=atol, epsrel=1e-11, limit=400, points=points)
    _check(val, err, atol)
    return val


def quad_tail(f, a, atol=1e-10, scale=None):
    """Integrate f on [a, inf) via d = a + scale * tan(theta)."""
    s = scale if scale is not None else max(1.0, a)

    def g(theta):
        t = math.tan(theta)
        return f(a + s * t) * s * (1.0 + t * t)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(g, 0.0, _HALF_PI, epsabs=atol, epsrel=1e-11, limit=400)
    _check(val, err, atol)
    return val


def quad_0inf(f, atol=1e-10, scale=1.0):
    return quad_tail(f, 0.0, atol=atol, scale=scale)


def _check(val, err, atol):
    if not np.isfinite(val):
        raise QuadratureError("quadrature returned a non-finite value")
    if err > 50.0 * max(atol, 1e-11 * abs(val)):
        raise QuadratureError("quadrature did not converge", residual=err)
