"""Elliptical distribution families and the law of the squared Mahalanobis
distance.

An elliptical density on R^p is ``alpha_p |Sigma|^-1/2 phi(d)`` with
``d = (x-mu)' Sigma^-1 (x-mu)``; the induced density of ``d`` itself is
``f(d) = beta_p d^(p/2-1) phi(d)``.  Twelve named families are supported;
each reduces to one of four structural forms (Kotz, Pearson II, Pearson VII,
generalized hyperbolic) that the numeric core evaluates directly, so an
alias and its reduced parametrization are the same object numerically.

``beta_p`` has no closed form per family here; it is obtained by adaptive
quadrature, as are the cdf and quantile of ``d``.  Sampling draws the
squared radius by inverse cdf and a direction uniformly on the sphere.
"""

import enum
import math

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.linalg import LinAlgError, cho_factor, cho_solve, cholesky

from . import _core
from ._quadrature import quad_ab, quad_tail
from .errors import DegenerateDataError, QuadratureError

__all__ = [
    "Family",
    "GeneratingFunction",
    "EllipticalModel",
    "phi_eval",
    "mahalanobis",
    "rng_from_seed",
]


class Family(str, enum.Enum):
    KOTZ = "kotz"
    GAUSSIAN = "gaussian"
    PEARSON_II = "pearson2"
    PEARSON_VII = "pearson7"
    T = "t"
    CAUCHY = "cauchy"
    GEN_HYPERBOLIC = "genhyp"
    VARIANCE_GAMMA = "vg"
    LAPLACE = "laplace"
    MULTIVARIATE_HYPERBOLIC = "mvhyp"
    HYPERBOLIC_MARGINALS = "hum"
    NORMAL_INVERSE_GAUSSIAN = "nig"


_FAMILY_PARAMS = {
    Family.KOTZ: ("N", "r", "s"),
    Family.GAUSSIAN: (),
    Family.PEARSON_II: ("m",),
    Family.PEARSON_VII: ("N", "s"),
    Family.T: ("nu",),
    Family.CAUCHY: (),
    Family.GEN_HYPERBOLIC: ("lam", "chi", "psi"),
    Family.VARIANCE_GAMMA: ("lam", "psi"),
    Family.LAPLACE: (),
    Family.MULTIVARIATE_HYPERBOLIC: ("chi", "psi"),
    Family.HYPERBOLIC_MARGINALS: ("chi", "psi"),
    Family.NORMAL_INVERSE_GAUSSIAN: ("chi", "psi"),
}


def _require(cond, msg):
    if not cond:
        raise ValueError(msg)


def _reduce(family, p, prm):
    """Validate parameter ranges and map to a structural form."""
    if family is Family.KOTZ:
        n, r, s = prm["N"], prm["r"], prm["s"]
        _require(r > 0, "Kotz requires r > 0")
        _require(s > 0, "Kotz requires s > 0")
        _require(n > -p / 2, "Kotz requires N > -p/2")
        return _core.FAM_KOTZ, (n, r, s)
    if family is Family.GAUSSIAN:
        return _core.FAM_KOTZ, (0.0, 0.5, 1.0)
    if family is Family.PEARSON_II:
        m = prm["m"]
        _require(m > 0, "Pearson II requires m > 0")
        return _core.FAM_PEARSON2, (m, 0.0, 0.0)
    if family is Family.PEARSON_VII:
        n, s = prm["N"], prm["s"]
        _require(n > p / 2, "Pearson VII requires N > p/2")
        _require(s > 0, "Pearson VII requires s > 0")
        return _core.FAM_PEARSON7, (n, s, 0.0)
    if family is Family.T:
        nu = prm["nu"]
        _require(nu > 0, "t requires nu > 0")
        return _core.FAM_PEARSON7, ((nu + p) / 2.0, nu, 0.0)
    if family is Family.CAUCHY:
        return _core.FAM_PEARSON7, ((1.0 + p) / 2.0, 1.0, 0.0)
    # remaining families are generalized-hyperbolic shapes; the stored first
    # parameter is the Bessel order lam - p/2
    if family is Family.GEN_HYPERBOLIC:
        lam, chi, psi = prm["lam"], prm["chi"], prm["psi"]
    elif family is Family.VARIANCE_GAMMA:
        lam, chi, psi = prm["lam"], 0.0, prm["psi"]
        _require(lam > 0, "variance gamma requires lam > 0")
    elif family is Family.LAPLACE:
        lam, chi, psi = 1.0, 0.0, 2.0
    elif family is Family.MULTIVARIATE_HYPERBOLIC:
        lam, chi, psi = (p + 1) / 2.0, prm["chi"], prm["psi"]
    elif family is Family.HYPERBOLIC_MARGINALS:
        lam, chi, psi = 1.0, prm["chi"], prm["psi"]
    elif family is Family.NORMAL_INVERSE_GAUSSIAN:
        lam, chi, psi = -0.5, prm["chi"], prm["psi"]
        _require(prm["chi"] > 0, "normal inverse Gaussian requires chi > 0")
    else:
        raise ValueError(f"unknown family {family!r}")
    _require(psi > 0, f"{family.value} requires psi > 0")
    _require(chi >= 0, f"{family.value} requires chi >= 0")
    _require(chi > 0 or lam > 0, f"{family.value} requires lam > 0 when chi = 0")
    return _core.FAM_GENHYP, (lam - p / 2.0, chi, psi)


class GeneratingFunction:
    """A named elliptical family with parameters, tied to a dimension p.

    The dimension is part of the identity because several parameter ranges
    and alias reductions (t, Cauchy, multivariate hyperbolic, NIG) involve
    p.  Instances are immutable, hashable, and cheap to share.
    """

    __slots__ = ("family", "p", "params", "fam_code", "fparams")

    def __init__(self, family, p, **params):
        family = Family(family)
        p = int(p)
        _require(p >= 2, "dimension p must be an integer >= 2")
        expected = _FAMILY_PARAMS[family]
        missing = [k for k in expected if k not in params]
        extra = [k for k in params if k not in expected]
        if missing or extra:
            raise ValueError(
                f"{family.value} takes parameters {expected}; missing {missing}, unexpected {extra}"
            )
        prm = {k: float(v) for k, v in params.items()}
        fam_code, fparams = _reduce(family, p, prm)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "params", tuple(sorted(prm.items())))
        object.__setattr__(self, "fam_code", fam_code)
        object.__setattr__(self, "fparams", tuple(float(v) for v in fparams))

    def __setattr__(self, name, value):
        raise AttributeError("GeneratingFunction is immutable")

    def __getstate__(self):
        return {"family": self.family.value, "p": self.p, "params": dict(self.params)}

    def __setstate__(self, state):
        self.__init__(state["family"], state["p"], **state["params"])

    def __eq__(self, other):
        return (
            isinstance(other, GeneratingFunction)
            and self.fam_code == other.fam_code
            and self.fparams == other.fparams
            and self.p == other.p
        )

    def __hash__(self):
        return hash((self.fam_code, self.fparams, self.p))

    def __repr__(self):
        prm = ", ".join(f"{k}={v:g}" for k, v in self.params)
        return f"GeneratingFunction({self.family.value}, p={self.p}{', ' + prm if prm else ''})"

    @property
    def s_p(self):
        return self.p / 2.0 - 1.0

    @property
    def support_upper(self):
        """Upper end of the support of d (1 for Pearson II, inf otherwise)."""
        return 1.0 if self.fam_code == _core.FAM_PEARSON2 else math.inf

    def log_ratios(self, t):
        """(log phi, phi'/phi, phi''/phi) elementwise; requires t > 0."""
        return _core.phi_log_ratios(np.asarray(t, dtype=float), self.fam_code, *self.fparams)

    def phi(self, d):
        return phi_eval(self, d)[0]


def _limits_at_zero(gen):
    """One-sided limits of (phi, phi', phi'') at d = 0; may be inf or nan."""
    fam = gen.fam_code
    f0, f1, f2 = gen.fparams
    inf = math.inf
    if fam == _core.FAM_KOTZ:
        n, r, s = f0, f1, f2
        if n == 0.0 and s == 1.0:
            return 1.0, -r, r * r
        if n == 0.0:
            return 1.0, (-inf if s < 1 else 0.0), (inf if s < 2 else 0.0)
        if n > 0.0:
            d1 = 1.0 if n == 1.0 else (0.0 if n > 1 else inf)
            d2 = 2.0 if n == 2.0 else (0.0 if n > 2 else math.nan)
            return 0.0, d1, d2
        return inf, -inf, inf
    if fam == _core.FAM_PEARSON2:
        m = f0
        return 1.0, -m, m * (m - 1.0)
    if fam == _core.FAM_PEARSON7:
        n, s = f0, f1
        return 1.0, -n / s, n * (n + 1.0) / (s * s)
    nu, chi, psi = f0, f1, f2
    if chi > 0:
        logphi, r1, r2 = _core.phi_log_ratios(np.array([0.0]), fam, f0, f1, f2)
        v = float(np.exp(logphi[0]))
        return v, v * float(r1[0]), v * float(r2[0])
    if nu > 1.0:
        return 2.0 ** (nu - 1.0) * math.gamma(nu), -(2.0 ** (nu - 3.0)) * psi * math.gamma(nu - 1.0), math.nan
    if nu > 0.0:
        return 2.0 ** (nu - 1.0) * math.gamma(nu), -inf, math.nan
    return inf, -inf, math.nan


def phi_eval(gen, d):
    """phi(d), phi'(d), phi''(d) with analytic derivatives.

    Pearson II evaluates to (0, 0, 0) outside its [0, 1] support.  At d = 0
    the one-sided limits are returned; they may be infinite for families
    whose generating function is singular at the origin.
    """
    d = np.asarray(d, dtype=float)
    scalar = d.ndim == 0
    d = np.atleast_1d(d).astype(float)
    if np.any(d < 0):
        raise ValueError("d must be nonnegative")
    phi = np.zeros(d.shape)
    dphi = np.zeros(d.shape)
    ddphi = np.zeros(d.shape)
    pos = d > 0
    if np.any(pos):
        logphi, r1, r2 = gen.log_ratios(d[pos])
        val = np.where(np.isfinite(logphi), np.exp(logphi), 0.0)
        phi[pos] = val
        dphi[pos] = val * r1
        ddphi[pos] = val * r2
    if np.any(~pos):
        p0, d0, dd0 = _limits_at_zero(gen)
        phi[~pos], dphi[~pos], ddphi[~pos] = p0, d0, dd0
    if scalar:
        return float(phi[0]), float(dphi[0]), float(ddphi[0])
    return phi, dphi, ddphi


def rng_from_seed(seed):
    """Counter-based generator keyed by an int or an (int, int) pair.

    Philox keys make (seed, trial) streams independent and reproducible
    regardless of execution order, which the Monte Carlo harness relies on.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    parts = np.atleast_1d(np.asarray(seed, dtype=np.uint64))
    if parts.size > 2:
        raise ValueError("seed must be an int or a pair of ints")
    key = np.zeros(2, dtype=np.uint64)
    key[: parts.size] = parts
    return np.random.Generator(np.random.Philox(key=key))


def mahalanobis(x, mu, sigma):
    """Squared Mahalanobis distance (x-mu)' Sigma^-1 (x-mu).

    ``x`` may be a single vector or an (n, p) matrix of row vectors.
    """
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (mu.size, mu.size):
        raise ValueError("sigma shape does not match mu")
    try:
        factor = cho_factor(sigma, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise DegenerateDataError("scatter matrix is singular or not positive definite") from exc
    xc = np.atleast_2d(x) - mu
    if xc.shape[1] != mu.size:
        raise ValueError("x dimension does not match mu")
    solved = cho_solve(factor, xc.T, check_finite=False)
    d = np.maximum(np.einsum("ij,ji->i", xc, solved), 0.0)
    return float(d[0]) if x.ndim == 1 else d


class EllipticalModel:
    """Dimension, location, scatter, and generating function of one model.

    Immutable after construction.  The normalization constant ``beta_p``,
    the median of d, and the dense cdf grid used by the sampler are computed
    lazily and cached; all methods are pure functions of the model and their
    arguments, so instances are safe to share across threads.
    """

    def __init__(self, gen, mu=None, sigma=None):
        if not isinstance(gen, GeneratingFunction):
            raise TypeError("gen must be a GeneratingFunction")
        p = gen.p
        mu = np.zeros(p) if mu is None else np.array(mu, dtype=float)
        sigma = np.eye(p) if sigma is None else np.array(sigma, dtype=float)
        if mu.shape != (p,):
            raise ValueError(f"mu must have length p={p}")
        if sigma.shape != (p, p):
            raise ValueError(f"sigma must be {p}x{p}")
        scale = max(1.0, float(np.abs(sigma).max()))
        if not np.allclose(sigma, sigma.T, rtol=0.0, atol=1e-12 * scale):
            raise ValueError("sigma must be symmetric within 1e-12")
        try:
            self._chol = cholesky(sigma, lower=True, check_finite=False)
        except LinAlgError as exc:
            raise ValueError("sigma must be positive definite") from exc
        mu.setflags(write=False)
        sigma.setflags(write=False)
        self.gen = gen
        self.p = p
        self.mu = mu
        self.sigma = sigma
        self._cache = {}

    def __repr__(self):
        return f"EllipticalModel({self.gen!r})"

    @property
    def shape(self):
        """Scatter normalized to unit determinant."""
        logdet = 2.0 * np.sum(np.log(np.diag(self._chol)))
        return self.sigma / math.exp(logdet / self.p)

    @property
    def beta_p(self):
        if "beta_p" not in self._cache:
            sp = self.gen.s_p
            gen = self.gen

            def integrand(t):
                if t <= 0.0:
                    return 0.0
                logphi, _, _ = gen.log_ratios(t)
                return float(np.exp(sp * math.log(t) + logphi)) if np.isfinite(logphi) else 0.0

            upper = gen.support_upper
            if math.isinf(upper):
                total = quad_tail(integrand, 0.0, atol=1e-12, scale=float(self.p))
            else:
                total = quad_ab(integrand, 0.0, upper, atol=1e-12)
            if total <= 0 or not np.isfinite(total):
                raise QuadratureError("normalization integral is degenerate")
            self._cache["beta_p"] = 1.0 / total
        return self._cache["beta_p"]

    @property
    def median_d(self):
        if "median_d" not in self._cache:
            self._cache["median_d"] = self.quantile_d(0.5)
        return self._cache["median_d"]

    # -- law of d ---------------------------------------------------------

    def density_d(self, d):
        """Density of the squared Mahalanobis distance."""
        d = np.asarray(d, dtype=float)
        scalar = d.ndim == 0
        d = np.atleast_1d(d)
        out = np.zeros(d.shape)
        inside = (d > 0) & (d < self.gen.support_upper)
        if np.any(inside):
            logphi, _, _ = self.gen.log_ratios(d[inside])
            sp = self.gen.s_p
            vals = self.beta_p * np.exp(sp * np.log(d[inside]) + logphi)
            out[inside] = np.where(np.isfinite(vals), vals, 0.0)
        if self.p == 2 and np.any(d == 0):
            out[d == 0] = self.beta_p * _limits_at_zero(self.gen)[0]
        return float(out[0]) if scalar else out

    def cdf_d(self, d):
        """Distribution function of d.

        Scalar input is integrated exactly by adaptive quadrature; array
        input is interpolated from the cached dense grid (used by the
        Monte Carlo machinery, accurate far beyond its tolerances).
        """
        d = np.asarray(d, dtype=float)
        if d.ndim > 0:
            grid_x, grid_f = self._grid()
            return np.clip(np.interp(d, grid_x, grid_f, left=0.0, right=1.0), 0.0, 1.0)
        d = float(d)
        if d <= 0:
            return 0.0
        upper = self.gen.support_upper
        if d >= upper:
            return 1.0
        split = self._cache.get("median_d", 1.0 if upper <= 1.0 else float(self.p))
        if d <= split:
            return float(min(1.0, quad_ab(self.density_d, 0.0, d, atol=1e-12)))
        if math.isinf(upper):
            tail = quad_tail(self.density_d, d, atol=1e-12)
        else:
            tail = quad_ab(self.density_d, d, upper, atol=1e-12)
        return float(min(1.0, max(0.0, 1.0 - tail)))

    def quantile_d(self, u):
        """Inverse cdf by bracketed bisection polished with Newton steps."""
        u = float(u)
        if not 0.0 < u < 1.0:
            raise ValueError("u must lie strictly inside (0, 1)")
        upper = self.gen.support_upper
        hi = min(4.0 * self.p, upper)
        lo = 0.0
        for _ in range(300):
            if self.cdf_d(hi) >= u or hi >= upper:
                break
            lo, hi = hi, min(hi * 4.0, upper)
        hi = min(hi, upper)
        x = 0.5 * (lo + hi)
        for _ in range(100):
            fx = self.cdf_d(x) - u
            if fx >= 0:
                hi = x
            else:
                lo = x
            dens = self.density_d(x)
            x_new = x - fx / dens if dens > 0 else 0.5 * (lo + hi)
            if not lo < x_new < hi:
                x_new = 0.5 * (lo + hi)
            if abs(x_new - x) <= 1e-12 * max(1.0, abs(x)) and abs(fx) < 1e-11:
                return float(x_new)
            x = x_new
        return float(x)

    # -- sampling ---------------------------------------------------------

    def _grid(self):
        """Dense (d, cdf) table for vectorized cdf and inverse-cdf draws."""
        if "grid" not in self._cache:
            u_lo, u_hi = 1e-9, 1.0 - 1e-9
            d_lo = max(self.quantile_d(u_lo), 1e-300)
            d_hi = self.quantile_d(u_hi)
            x = np.geomspace(d_lo, d_hi, 4097)
            # per-segment 7-point Gauss-Legendre, vectorized across segments
            nodes, wts = np.polynomial.legendre.leggauss(7)
            a = x[:-1][:, None]
            h = (x[1:] - x[:-1])[:, None]
            pts = a + 0.5 * h * (nodes[None, :] + 1.0)
            vals = self.density_d(pts.ravel()).reshape(pts.shape)
            seg = 0.5 * h[:, 0] * (vals * wts[None, :]).sum(axis=1)
            cdf = np.maximum.accumulate(np.clip(u_lo + np.concatenate([[0.0], np.cumsum(seg)]), 0.0, 1.0))
            keep = np.concatenate([[True], np.diff(cdf) > 0])
            x, cdf = x[keep], cdf[keep]
            self._cache["grid"] = (x, cdf)
            self._cache["grid_inv"] = PchipInterpolator(cdf, x, extrapolate=False)
            self._cache["grid_range"] = (float(cdf[0]), float(cdf[-1]))
        return self._cache["grid"]

    def _inverse_cdf(self, u):
        self._grid()
        lo, hi = self._cache["grid_range"]
        d = np.asarray(self._cache["grid_inv"](np.clip(u, lo, hi)), dtype=float)
        outside = np.nonzero((u < lo) | (u > hi))[0]
        for i in outside:
            d[i] = self.quantile_d(float(u[i]))
        return d

    def sample_d(self, n, seed):
        """n inverse-cdf draws of the squared Mahalanobis distance."""
        rng = rng_from_seed(seed)
        return self._inverse_cdf(rng.uniform(size=int(n)))

    def sample(self, n, seed):
        """n i.i.d. draws: x = mu + sqrt(d) * A u with A A' = Sigma."""
        n = int(n)
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = rng_from_seed(seed)
        d = self._inverse_cdf(rng.uniform(size=n))
        g = rng.standard_normal((n, self.p))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return self.mu + np.sqrt(d)[:, None] * (g @ self._chol.T)

    def mahalanobis(self, x):
        return mahalanobis(x, self.mu, self.sigma)
