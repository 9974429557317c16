"""Fitting of S-estimators (and the fixed-scale M variant) by the weighted
reweighting iteration.

Each pass computes Mahalanobis distances at the current (mu, Omega), solves
the M-scale constraint mean rho(d/sigma) = b by bisection, and replaces
location and shape with the w(d/sigma)-weighted mean and scatter, the
latter renormalized to unit determinant.  Iteration stops when the Gaussian
KL shape divergence between successive shapes drops below ``tol``.

The scatter matrix is recovered from the fitted shape by median scaling:
Sigma-hat = median(d) / F^-1(1/2) * Omega-hat, where F is the model cdf of
d (chi-squared for the Gaussian default).
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, cholesky

from . import _core
from .elliptical import EllipticalModel, Family, GeneratingFunction
from .errors import DegenerateDataError, DegenerateScaleWarning, InitialEstimateWarning
from .kernels import MleKernel

__all__ = [
    "FitResult",
    "b_max_breakdown",
    "breakdown_point",
    "m_scale",
    "initial_estimate",
    "scatter_from_shape",
    "fit_s",
    "fit_mm_shr",
    "fit_mle",
    "kl_divergence",
]

MAX_ITER_DEFAULT = 200
CONVERGENCE_TOL = 1e-10


@dataclass
class FitResult:
    """Fitted location, unit-determinant shape, scatter, and M-scale."""

    mu_hat: np.ndarray
    omega_hat: np.ndarray
    sigma_hat: np.ndarray
    m_scale: float
    iterations: int
    converged: bool
    final_step: float

    def as_dict(self):
        return {
            "mu": self.mu_hat.tolist(),
            "omega": self.omega_hat.ravel().tolist(),
            "sigma": self.sigma_hat.ravel().tolist(),
            "m_scale": self.m_scale,
            "iterations": self.iterations,
            "converged": self.converged,
            "final_step": self.final_step,
        }


def b_max_breakdown(n, p):
    """b achieving the maximum breakdown point floor((n-p+1)/2)/n."""
    n, p = int(n), int(p)
    if n < p + 1:
        raise DegenerateDataError(f"need n >= p+1 (got n={n}, p={p})")
    b = 0.5 - (p + 1) / (2.0 * n)
    if b <= 0.0:
        raise DegenerateDataError(f"maximum-breakdown b is not positive for n={n}, p={p}")
    return b


def breakdown_point(n, p, b):
    """Finite-sample breakdown point (floor(n b) + 1)/n of a proper S-fit."""
    n = int(n)
    if n < int(p) + 1:
        raise DegenerateDataError(f"need n >= p+1 (got n={n}, p={p})")
    return (math.floor(n * b) + 1) / n


def kl_divergence(mu, sigma, mu_hat, sigma_hat):
    """Gaussian Kullback-Leibler divergence between (mu, Sigma) pairs.

    Also serves as the solver's inter-iterate convergence measure on
    unit-determinant shapes, where the log-determinant term vanishes.
    """
    mu = np.asarray(mu, dtype=float)
    mu_hat = np.asarray(mu_hat, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    sigma_hat = np.asarray(sigma_hat, dtype=float)
    p = mu.size
    try:
        factor = cho_factor(sigma, lower=True, check_finite=False)
        chol_hat = cholesky(sigma_hat, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise DegenerateDataError("divergence requires positive definite matrices") from exc
    trace = float(np.trace(cho_solve(factor, sigma_hat, check_finite=False)))
    diff = mu - mu_hat
    quad = float(diff @ cho_solve(factor, diff, check_finite=False))
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol_hat))) - np.sum(np.log(np.diag(factor[0]))))
    return 0.5 * (trace + quad - p - logdet)


def m_scale(distances, kernel, b, hint=0.0):
    """Scale sigma solving mean rho(d_i/sigma) = b, by bracketed bisection.

    mean rho is nonincreasing in sigma, so the bracket is safe; when the
    constraint is flat at b (degenerate data) the supremum root is returned
    and a :class:`DegenerateScaleWarning` is issued.
    """
    d = np.asarray(distances, dtype=float)
    if d.ndim != 1:
        raise ValueError("distances must be a vector")
    if np.any(d < 0):
        raise ValueError("distances must be nonnegative")
    if not 0.0 < b <= kernel.rho_at_inf:
        raise DegenerateDataError(f"b={b} is outside (0, rho(inf)]")
    n_pos = int(np.count_nonzero(d > 0))
    if n_pos < math.ceil(len(d) * (1.0 - b)):
        raise DegenerateDataError("too few strictly positive distances for the M-scale")
    try:
        sigma, flat = _core.m_scale(d, kernel._kp, b, hint)
    except ValueError as exc:
        raise DegenerateDataError(str(exc)) from exc
    if flat:
        warnings.warn("M-scale constraint is flat; returning the supremum root", DegenerateScaleWarning)
    return sigma


def initial_estimate(data):
    """Deterministic robust starting point (not the KSD estimator).

    Location is the coordinatewise median.  Shape comes from the covariance
    of the half of the samples with the smallest coordinatewise-standardized
    norm, renormalized to unit determinant; if that covariance is singular
    the identity shape is returned with a warning.
    """
    x = np.asarray(data, dtype=float)
    n, p = x.shape
    if n < p + 1:
        raise DegenerateDataError(f"need n >= p+1 (got n={n}, p={p})")
    mu0 = np.median(x, axis=0)
    xc = x - mu0
    mad = np.median(np.abs(xc), axis=0)
    scale = np.where(mad > 0, mad, np.where(np.std(xc, axis=0) > 0, np.std(xc, axis=0), 1.0))
    norms = np.einsum("ij,ij->i", xc / scale, xc / scale)
    half = np.argsort(norms, kind="stable")[: max((n + 1) // 2, 1)]
    xh = xc[half]
    cov = xh.T @ xh / len(half)
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0 or not np.isfinite(logdet):
        warnings.warn("half-sample covariance is singular; using identity shape", InitialEstimateWarning)
        return mu0, np.eye(p)
    omega0 = cov / math.exp(logdet / p)
    return mu0, omega0


def scatter_from_shape(omega_hat, distances, median_ref):
    """Median-based scatter: Sigma-hat = median(d)/F^-1(1/2) * Omega-hat."""
    d = np.asarray(distances, dtype=float)
    med = float(np.median(d))
    if med <= 0:
        raise DegenerateDataError("median distance is zero; scatter scale undefined")
    if not median_ref > 0:
        raise ValueError("reference median must be positive")
    return (med / median_ref) * np.asarray(omega_hat, dtype=float)


def _chi2_median(p):
    from scipy.stats import chi2

    return float(chi2.ppf(0.5, p))


def _median_ref(kernel, model, p):
    if model is not None:
        gen = model.gen if isinstance(model, EllipticalModel) else model
        return EllipticalModel(gen).median_d if isinstance(gen, GeneratingFunction) else float(model)
    gen = getattr(kernel, "gen", None)
    if gen is not None:
        if gen.fam_code == _core.FAM_KOTZ and gen.fparams == (0.0, 0.5, 1.0):
            return _chi2_median(p)
        return EllipticalModel(gen).median_d
    return _chi2_median(p)


def _fast_distances(x, mu, omega):
    try:
        factor = cho_factor(omega, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise DegenerateDataError("shape matrix became singular during iteration") from exc
    xc = x - mu
    return np.maximum(np.einsum("ij,ji->i", xc, cho_solve(factor, xc.T, check_finite=False)), 0.0), factor


def _shape_step(omega_new, factor_old):
    # KL shape divergence between successive unit-determinant shapes
    p = omega_new.shape[0]
    trace = float(np.trace(cho_solve(factor_old, omega_new, check_finite=False)))
    return 0.5 * (trace - p)


def _normalize_init(init, data):
    if init is None:
        return initial_estimate(data)
    if isinstance(init, FitResult):
        return init.mu_hat, init.omega_hat
    mu0, omega0 = init
    mu0 = np.asarray(mu0, dtype=float)
    omega0 = np.asarray(omega0, dtype=float)
    sign, logdet = np.linalg.slogdet(omega0)
    if sign <= 0:
        raise DegenerateDataError("initial shape must be positive definite")
    return mu0, omega0 / math.exp(logdet / omega0.shape[0])


def _reweight_loop(x, weights_of, mu, omega, max_iter, tol):
    """Shared reweighting iteration; ``weights_of`` maps distances to
    (weights, sigma).  Returns (mu, omega, sigma, iterations, converged,
    step)."""
    n, p = x.shape
    step = math.inf
    converged = False
    it = 0
    sigma = 0.0
    for it in range(1, max_iter + 1):
        d, factor = _fast_distances(x, mu, omega)
        w, sigma = weights_of(d, sigma)
        sw = float(np.sum(w))
        if not sw > 0:
            raise DegenerateDataError(
                "all observations received zero weight; increase the tuning parameter "
                "(larger q, gamma, or c_shr)"
            )
        mu_new = (w @ x) / sw
        xc = x - mu_new
        scatter = (w[:, None] * xc).T @ xc
        scatter = 0.5 * (scatter + scatter.T)
        sign, logdet = np.linalg.slogdet(scatter)
        if sign <= 0 or not np.isfinite(logdet):
            raise DegenerateDataError(
                "weighted scatter is singular; increase the tuning parameter "
                "(larger q, gamma, or c_shr)"
            )
        omega_new = scatter / math.exp(logdet / p)
        step = _shape_step(omega_new, factor)
        mu, omega = mu_new, omega_new
        if step < tol:
            converged = True
            break
    return mu, omega, sigma, it, converged, step


def fit_s(data, kernel, b=None, init=None, model=None, max_iter=MAX_ITER_DEFAULT, tol=CONVERGENCE_TOL):
    """S-estimate of location, shape, and scatter for one kernel.

    ``b`` defaults to the maximum-breakdown value 1/2 - (p+1)/(2n).  ``init``
    may be a (mu0, omega0) pair or a FitResult; by default the built-in
    robust starting point is used.  ``model`` (an EllipticalModel,
    GeneratingFunction, or reference median of d) only affects the median
    scaling of the scatter matrix and defaults to the kernel's own family,
    else chi-squared.
    """
    x = np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise ValueError("data must be an n x p matrix")
    n, p = x.shape
    if b is None:
        b = b_max_breakdown(n, p)
    if n * (1.0 - b / kernel.rho_at_inf) < p + 1:
        raise DegenerateDataError(
            f"existence condition violated: need n(1 - b/rho(inf)) >= p+1, got n={n}, p={p}, b={b}"
        )
    mu, omega = _normalize_init(init, x)

    def weights_of(d, sigma_prev):
        sigma = m_scale(d, kernel, b, hint=sigma_prev)
        return kernel.weight(d / sigma), sigma

    mu, omega, _, it, converged, step = _reweight_loop(x, weights_of, mu, omega, max_iter, tol)
    d, _ = _fast_distances(x, mu, omega)
    sigma = m_scale(d, kernel, b)
    sigma_hat = scatter_from_shape(omega, d, _median_ref(kernel, model, p))
    return FitResult(mu, omega, sigma_hat, sigma, it, converged, step)


def fit_mm_shr(data, shr_kernel, b=None, init=None, model=None, max_iter=MAX_ITER_DEFAULT, tol=CONVERGENCE_TOL):
    """MM-estimate: M-iteration with the SHR kernel at a fixed scale.

    The scale is the SHR M-scale of the distances at the initial estimates,
    solved once and then held fixed while location and shape are
    re-weighted.  Freezing the scale at the init keeps the fit consistent
    with the SHR kernel's asymptotic tuning, but it also retains the initial
    estimator's sampling variability; that is the trade the MM construction
    makes for efficiency and the reason its fits are more
    initialization-sensitive than full S-fits.
    """
    x = np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise ValueError("data must be an n x p matrix")
    n, p = x.shape
    if b is None:
        b = b_max_breakdown(n, p)
    mu0, omega0 = _normalize_init(init, x)
    d0, _ = _fast_distances(x, mu0, omega0)
    sigma_fixed = m_scale(d0, shr_kernel, b)

    def weights_of(d, _sigma_prev):
        return shr_kernel.weight(d / sigma_fixed), sigma_fixed

    mu, omega, _, it, converged, step = _reweight_loop(x, weights_of, mu0, omega0, max_iter, tol)
    d, _ = _fast_distances(x, mu, omega)
    sigma_hat = scatter_from_shape(omega, d, _median_ref(shr_kernel, model, p))
    return FitResult(mu, omega, sigma_hat, sigma_fixed, it, converged, step)


def fit_mle(data, gen, init=None, max_iter=500, tol=CONVERGENCE_TOL):
    """Maximum-likelihood location/scatter by iterative reweighting.

    Uses the likelihood weights -2 phi'/phi evaluated at the raw distances
    (no M-scale); the scatter update is the weighted second-moment matrix
    itself, so the scale information lives in sigma_hat directly.
    """
    x = np.asarray(data, dtype=float)
    n, p = x.shape
    kernel = MleKernel(gen)
    if init is None:
        mu = x.mean(axis=0)
        sigma = np.cov(x, rowvar=False, bias=True)
        sigma = 0.5 * (sigma + sigma.T) + 1e-12 * np.eye(p)
    else:
        mu, omega0 = _normalize_init(init, x)
        sigma = omega0.copy()
    step = math.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        try:
            factor = cho_factor(sigma, lower=True, check_finite=False)
        except LinAlgError as exc:
            raise DegenerateDataError("MLE scatter became singular") from exc
        xc = x - mu
        d = np.maximum(np.einsum("ij,ji->i", xc, cho_solve(factor, xc.T, check_finite=False)), 0.0)
        w = kernel.weight(d)
        sw = float(np.sum(w))
        if not sw > 0:
            raise DegenerateDataError("MLE weights vanished")
        mu_new = (w @ x) / sw
        xc = x - mu_new
        sigma_new = (w[:, None] * xc).T @ xc / n
        sigma_new = 0.5 * (sigma_new + sigma_new.T)
        step = kl_divergence(mu_new, sigma_new, mu, sigma)
        mu, sigma = mu_new, sigma_new
        if step < tol:
            converged = True
            break
    sign, logdet = np.linalg.slogdet(sigma)
    if sign <= 0:
        raise DegenerateDataError("MLE scatter is not positive definite")
    omega = sigma / math.exp(logdet / p)
    return FitResult(mu, omega, sigma, math.exp(logdet / p), it, converged, step)
