"""Asymptotic constants, efficiencies, influence functions, and tuning.

For a kernel with weight w and rho, under a model with density f(d) of the
squared Mahalanobis distance and scale ``sigma`` solving E[rho(d/sigma)] = b:

    omega1  = p^-1 E[d w^2(d/sigma)]
    omega2  = -2 beta int p^-1 d^(p/2) w(d/sigma) phi'(d) dd
    lambda1 = -2 beta int sigma^-1 d^(p/2+1) w(d/sigma) phi'(d) dd
    lambda2 = -beta int d^(p/2) (rho(d/sigma) - b) phi'(d) dd
    zeta1   = lambda1^-2 p(p+2) E[(d/sigma)^2 w^2(d/sigma)]
    zeta2   = lambda2^-2 E[(rho(d/sigma) - b)^2] - 2 p^-1 zeta1

Location and shape efficiencies are the MLE-to-kernel ratios of
``omega1/omega2^2`` and ``zeta1``.  All integrals use beta * d^(p/2) phi' =
f(d) * d * (phi'/phi), so only the normalized density and the log-derivative
ratios are ever evaluated.

The MLE reference and the raw q = 1 kernel are evaluated at sigma = 1 with
b = E[rho(d)], the self-consistent scaling at which the estimator is
Fisher-consistent.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._quadrature import quad_ab, quad_tail
from .elliptical import EllipticalModel, GeneratingFunction, mahalanobis
from .errors import QuadratureError, TuningError
from .kernels import MleKernel, RockeKernel, ShrKernel, SqKernel, valid_q_range

__all__ = [
    "AsymptoticConstants",
    "constants",
    "efficiency_shape",
    "efficiency_location",
    "max_efficiency",
    "tune_to_efficiency",
    "influence_location",
    "influence_scatter",
    "alpha_sigma",
    "mle_equivalence_check",
    "MleEquivalence",
    "gamma_mu",
    "gamma_omega",
]

_ATOL = 1e-9


@dataclass(frozen=True)
class AsymptoticConstants:
    omega1: float
    omega2: float
    zeta1: float
    zeta2: float
    lambda1: float
    lambda2: float
    sigma: float
    b: float


@lru_cache(maxsize=256)
def _standard_model(gen):
    return EllipticalModel(gen)


def _as_gen(model_or_gen):
    if isinstance(model_or_gen, EllipticalModel):
        return model_or_gen.gen
    if isinstance(model_or_gen, GeneratingFunction):
        return model_or_gen
    raise TypeError("expected EllipticalModel or GeneratingFunction")


def _segments(lo, hi, extra=()):
    """Breakpoints for piecewise integration over [lo, hi]."""
    pts = sorted({lo, hi, *[x for x in extra if lo < x < hi]})
    return list(zip(pts[:-1], pts[1:]))


def _integrate(fun, lo, hi, model, atol=_ATOL):
    """Integral of ``fun`` over [lo, hi].

    Infinite tails use the tangent transform; very wide finite intervals
    (hard-rejection cutoffs can sit orders of magnitude beyond the density
    mass) are cut at geometric breakpoints so the adaptive rule stays
    anchored to the mass.
    """
    if hi <= lo:
        return 0.0
    if math.isinf(hi):
        finite_to = max(4.0 * model.p, 2.0 * lo)
        val = quad_ab(fun, lo, finite_to, atol=atol) if finite_to > lo else 0.0
        start = max(lo, finite_to)
        return val + quad_tail(fun, start, atol=atol, scale=max(1.0, model.p, start))
    scale = max(4.0 * model.p, 2.0 * lo, 1e-12)
    if hi <= 8.0 * scale:
        return quad_ab(fun, lo, hi, atol=atol)
    pts = [lo]
    s = scale
    while s < hi / 2.0:
        if s > lo:
            pts.append(s)
        s *= 8.0
    pts.append(hi)
    seg_atol = atol / len(pts)
    return sum(quad_ab(fun, a, b, atol=seg_atol) for a, b in zip(pts[:-1], pts[1:]))


def _density_closure(model):
    """Scalar (f(d), phi'/phi(d)) evaluator without array overhead."""
    from . import _core

    beta = model.beta_p
    sp = model.gen.s_p
    fam = model.gen.fam_code
    f0, f1, f2 = model.gen.fparams

    def dens_ratio(d):
        if d <= 0.0:
            return 0.0, 0.0
        logphi, r1, _ = _core.ratios1(d, fam, f0, f1, f2)
        if not math.isfinite(logphi):
            return 0.0, 0.0
        return beta * math.exp(sp * math.log(d) + logphi), r1

    return dens_ratio


def _expect_rho(kernel, model, sigma, dens_ratio=None):
    """E[rho(d/sigma)] under the model, exploiting the hard-rejection tail."""
    from . import _core

    dens_ratio = dens_ratio or _density_closure(model)
    kp = kernel._kp
    a, c = kernel.a * sigma, kernel.c * sigma
    upper = model.gen.support_upper
    c_eff = min(c, upper)

    def fun(d):
        return _core.rho1(d / sigma, kp) * dens_ratio(d)[0]

    val = _integrate(fun, a, c_eff, model)
    if kernel.proper and c_eff < upper:
        tail = _integrate(lambda d: dens_ratio(d)[0], c_eff, upper, model)
        val += tail
    return val


def _solve_a1_sigma(kernel, model, b, dens_ratio=None):
    """Scale at which the population rho-constraint equals b (A1)."""
    dens_ratio = dens_ratio or _density_closure(model)
    e_rho = lambda s: _expect_rho(kernel, model, s, dens_ratio)  # noqa: E731
    lo = hi = max(model.median_d, 1e-8)
    for _ in range(200):
        if e_rho(lo) >= b:
            break
        lo /= 4.0
    else:
        raise TuningError(f"population rho-expectation never reaches b={b}")
    for _ in range(200):
        if e_rho(hi) <= b:
            break
        hi *= 4.0
    else:
        raise TuningError("population rho-expectation never drops to b")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if e_rho(mid) >= b:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-10 * hi:
            break
    return 0.5 * (lo + hi)


def _fixed_scale(kernel):
    """Kernels evaluated at sigma = 1 with b = E[rho(d)]."""
    return kernel.kind == "mle" or (kernel.kind == "sq" and kernel.q == 1.0)


def _diverges_at_origin(fun):
    """True when |fun(d)| grows at least like 1/d as d -> 0+."""
    probes = (1e-4, 1e-6, 1e-8)
    vals = []
    for d in probes:
        v = abs(fun(d))
        if not math.isfinite(v):
            return True
        if v == 0.0:
            return False
        vals.append(v)
    slopes = [
        math.log(vals[i + 1] / vals[i]) / math.log(probes[i + 1] / probes[i]) for i in range(len(vals) - 1)
    ]
    return min(slopes) <= -1.0 + 1e-6


@lru_cache(maxsize=512)
def _constants_cached(kernel, gen, b):
    from . import _core

    model = _standard_model(gen)
    p = float(model.p)
    dens_ratio = _density_closure(model)
    kp = kernel._kp

    if _fixed_scale(kernel):
        sigma = 1.0
        b_eff = _expect_rho(kernel, model, sigma, dens_ratio)
    else:
        sigma = _solve_a1_sigma(kernel, model, b, dens_ratio)
        b_eff = b

    a_d = kernel.a * sigma
    c_d = min(kernel.c * sigma, model.gen.support_upper)
    upper = model.gen.support_upper

    def seg_int(fun, lo, hi):
        return _integrate(fun, lo, hi, model)

    def wk(d):
        return _core.weight1(d / sigma, kp)

    def rho_cent(d):
        return _core.rho1(d / sigma, kp) - b_eff

    def band_omega2(d):
        f, r1 = dens_ratio(d)
        return -2.0 * d * r1 * wk(d) * f

    def band_lambda1(d):
        f, r1 = dens_ratio(d)
        return -2.0 * d * d * r1 * wk(d) * f

    # the location constants diverge for families whose density is singular
    # at the center (variance gamma with lam <= 1); quadrature error
    # estimates cannot be trusted on a non-integrable endpoint, so probe the
    # local power of the integrand first and report nan when it diverges
    def om1_band(d):
        return d * wk(d) ** 2 * dens_ratio(d)[0]

    if a_d == 0.0 and (_diverges_at_origin(om1_band) or _diverges_at_origin(band_omega2)):
        omega1, omega2 = math.nan, math.nan
    else:
        try:
            omega1 = seg_int(om1_band, a_d, c_d) / p
            omega2 = seg_int(band_omega2, a_d, c_d) / p
        except QuadratureError:
            omega1, omega2 = math.nan, math.nan
    lambda1 = seg_int(band_lambda1, a_d, c_d) / sigma
    ew2 = seg_int(lambda d: (d / sigma) ** 2 * wk(d) ** 2 * dens_ratio(d)[0], a_d, c_d)
    zeta1 = p * (p + 2.0) * ew2 / lambda1**2

    def band_lambda2(d):
        f, r1 = dens_ratio(d)
        return -d * r1 * rho_cent(d) * f

    lambda2 = 0.0
    rho_m2 = 0.0
    if a_d > 0:
        lambda2 += seg_int(lambda d: dens_ratio(d)[0] * dens_ratio(d)[1] * d * b_eff, 0.0, a_d)
        rho_m2 += b_eff**2 * _integrate(lambda d: dens_ratio(d)[0], 0.0, a_d, model)
    lambda2 += seg_int(band_lambda2, a_d, c_d)
    rho_m2 += seg_int(lambda d: rho_cent(d) ** 2 * dens_ratio(d)[0], a_d, c_d)
    if kernel.proper and c_d < upper:
        lambda2 += seg_int(lambda d: -d * dens_ratio(d)[1] * (1.0 - b_eff) * dens_ratio(d)[0], c_d, upper)
        rho_m2 += (1.0 - b_eff) ** 2 * _integrate(lambda d: dens_ratio(d)[0], c_d, upper, model)
    zeta2 = rho_m2 / lambda2**2 - 2.0 * zeta1 / p
    return AsymptoticConstants(omega1, omega2, zeta1, zeta2, lambda1, lambda2, sigma, b_eff)


def constants(kernel, model_or_gen, b):
    """Asymptotic constants of one (kernel, model) pair at breakdown b."""
    return _constants_cached(kernel, _as_gen(model_or_gen), float(b))


def mle_constants(model_or_gen):
    gen = _as_gen(model_or_gen)
    return _constants_cached(MleKernel(gen), gen, 0.5)


def efficiency_shape(kernel, model_or_gen, b):
    """zeta1(MLE) / zeta1(kernel): asymptotic relative shape efficiency."""
    gen = _as_gen(model_or_gen)
    return mle_constants(gen).zeta1 / constants(kernel, gen, b).zeta1


def efficiency_location(kernel, model_or_gen, b):
    gen = _as_gen(model_or_gen)
    ref = mle_constants(gen)
    cst = constants(kernel, gen, b)
    vals = (ref.omega1, ref.omega2, cst.omega1, cst.omega2)
    if not all(math.isfinite(v) for v in vals):
        raise TuningError(
            "location asymptotic variance is undefined for this family "
            "(the location weight is not square-integrable near the center)"
        )
    return (ref.omega1 / ref.omega2**2) / (cst.omega1 / cst.omega2**2)


def _kernel_factory(kind, gen):
    kind = kind.lower()
    if kind == "sq":
        return lambda q: SqKernel(gen, q)
    if kind == "rocke":
        return lambda g: RockeKernel(g)
    if kind == "shr":
        return lambda c: ShrKernel(c)
    raise TuningError(f"estimator kind {kind!r} has no tuning parameter")


def _sq_q_upper(gen):
    rng = valid_q_range(gen)
    upper = 0.999
    if rng.gap is not None:
        upper = min(upper, rng.gap[0])
    return upper


def _eff_fn(kind, gen, b, measure):
    make = _kernel_factory(kind, gen)
    eff = efficiency_shape if measure == "shape" else efficiency_location

    def f(param):
        try:
            return eff(make(param), gen, b)
        except TuningError:
            return -math.inf

    return f


def max_efficiency(kind, model_or_gen, b, measure="shape"):
    """(argmax parameter, maximum efficiency) over the tuning range."""
    gen = _as_gen(model_or_gen)
    f = _eff_fn(kind, gen, b, measure)
    kind = kind.lower()
    if kind == "sq":
        q = _sq_q_upper(gen)
        return q, f(q)
    if kind == "rocke":
        # efficiency increases with gamma; the boundary is the maximum
        grid = [0.5, 0.8, 1.0]
        vals = [f(g) for g in grid]
        i = int(np.argmax(vals))
        return grid[i], vals[i]
    # SHR: unimodal in log c; coarse scan then golden-section refinement
    cs = np.geomspace(1.02, 1e5, 17)
    vals = [f(c) for c in cs]
    i = int(np.argmax(vals))
    lo = math.log(cs[max(i - 1, 0)])
    hi = math.log(cs[min(i + 1, len(cs) - 1)])
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - invphi * (hi - lo)
    x2 = lo + invphi * (hi - lo)
    f1, f2 = f(math.exp(x1)), f(math.exp(x2))
    for _ in range(25):
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + invphi * (hi - lo)
            f2 = f(math.exp(x2))
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - invphi * (hi - lo)
            f1 = f(math.exp(x1))
        if hi - lo < 1e-3:
            break
    c = math.exp(0.5 * (lo + hi))
    return c, f(c)


def tune_to_efficiency(kind, model_or_gen, b, target, measure="shape", tol=1e-4):
    """Tuning parameter achieving the target efficiency (increasing branch).

    Raises :class:`TuningError` carrying the maximum and its argmax when the
    target is out of reach.
    """
    if not 0.0 < target < 1.0:
        raise TuningError("target efficiency must lie in (0, 1)")
    gen = _as_gen(model_or_gen)
    f = _eff_fn(kind, gen, b, measure)
    kind = kind.lower()
    arg_hi, eff_hi = max_efficiency(kind, gen, b, measure)
    if target > eff_hi + tol:
        raise TuningError(
            f"target {target} exceeds the maximum achievable efficiency {eff_hi:.4f} at parameter {arg_hi:.6g}",
            max_efficiency=eff_hi,
            argmax=arg_hi,
        )
    if abs(eff_hi - target) <= tol:
        return arg_hi

    if kind == "sq":
        # reparametrize q = 1 - e^u so the bracket is finite
        u_hi = math.log(1.0 - arg_hi)
        u_lo = u_hi
        for _ in range(60):
            u_lo += math.log(8.0)
            if f(1.0 - math.exp(u_lo)) < target:
                break
        lo_v, hi_v = u_lo, u_hi
        to_param = lambda u: 1.0 - math.exp(u)  # noqa: E731
    elif kind == "rocke":
        lo_v, hi_v = 1e-6, arg_hi
        to_param = lambda g: g  # noqa: E731
    else:
        lo_v, hi_v = math.log(1.0 + 1e-9), math.log(arg_hi)
        to_param = lambda u: math.exp(u)  # noqa: E731
        floor = f(to_param(lo_v))
        if floor > target + tol:
            raise TuningError(
                f"target {target} is below the achievable minimum {floor:.4f} of the SHR family",
                max_efficiency=floor,
                argmax=to_param(lo_v),
            )

    for _ in range(200):
        mid = 0.5 * (lo_v + hi_v)
        val = f(to_param(mid))
        if abs(val - target) <= tol:
            return to_param(mid)
        if val < target:
            lo_v = mid
        else:
            hi_v = mid
    raise TuningError(f"tuning search did not converge to target {target}")


# -- influence functions ---------------------------------------------------


def influence_location(kernel, model, b, z):
    """Influence of a point contamination at z on the location estimate."""
    cst = constants(kernel, model.gen, b)
    z_c = np.asarray(z, dtype=float) - model.mu
    d_z = mahalanobis(np.asarray(z, dtype=float), model.mu, model.sigma)
    if d_z == 0.0:
        return np.zeros(model.p)
    return float(kernel.weight(d_z / cst.sigma)) / cst.omega2 * z_c


def influence_scatter(kernel, model, b, z):
    """Influence of a point contamination at z on the scatter estimate."""
    cst = constants(kernel, model.gen, b)
    p = model.p
    z = np.asarray(z, dtype=float)
    z_c = z - model.mu
    d_z = mahalanobis(z, model.mu, model.sigma)
    t = d_z / cst.sigma
    term1 = (float(kernel.rho(t)) - cst.b) / cst.lambda2 * model.sigma
    if d_z == 0.0:
        return term1
    outer = np.outer(z_c, z_c) / d_z - model.sigma / p
    return term1 + p * (p + 2.0) * t * float(kernel.weight(t)) / cst.lambda1 * outer


def alpha_sigma(kernel, model_or_gen, b, d_z):
    """Scalar profile of the rank-one influence term as a function of d_z."""
    gen = _as_gen(model_or_gen)
    cst = constants(kernel, gen, b)
    p = gen.p
    t = np.asarray(d_z, dtype=float) / cst.sigma
    return p * (p + 2.0) * t * np.asarray(kernel.weight(t)) / cst.lambda1


def gamma_mu(kernel, model, b):
    """Asymptotic covariance of sqrt(n)(mu_hat - mu)."""
    cst = constants(kernel, model.gen, b)
    return cst.omega1 / cst.omega2**2 * model.sigma


def gamma_omega(kernel, model, b):
    """Asymptotic covariance of sqrt(n) vec(Omega_hat - Omega)."""
    cst = constants(kernel, model.gen, b)
    p = model.p
    omega = model.shape
    eye = np.eye(p * p)
    comm = np.zeros((p * p, p * p))
    for i in range(p):
        for j in range(p):
            comm[i * p + j, j * p + i] = 1.0
    kron = np.kron(omega, omega)
    vec = omega.reshape(-1, order="F")[:, None]
    return cst.zeta1 * (eye + comm) @ kron - (2.0 * cst.zeta1 / p) * (vec @ vec.T)


# -- MLE equivalence (Cramer-Rao attainment) -------------------------------


@dataclass(frozen=True)
class MleEquivalence:
    satisfied: bool
    residual: float
    y: float


def mle_equivalence_check(model_or_gen, n_grid=50, threshold=1e-8):
    """Least-squares test of t phi''/phi - t (phi'/phi)^2 = y phi'/phi.

    Families passing this proportionality make the q = 1 S-q estimate the
    maximum-likelihood estimate (Cramer-Rao attainment).
    """
    gen = _as_gen(model_or_gen)
    model = _standard_model(gen)
    probs = np.linspace(0.02, 0.98, n_grid)
    grid = np.array([model.quantile_d(float(u)) for u in probs])
    _, r1, r2 = gen.log_ratios(grid)
    lhs = grid * (r2 - r1 * r1)
    rhs = r1
    y = float(np.dot(lhs, rhs) / np.dot(rhs, rhs))
    residual = float(np.max(np.abs(lhs - y * rhs)) / max(1.0, np.max(np.abs(lhs))))
    return MleEquivalence(residual < threshold, residual, y)
