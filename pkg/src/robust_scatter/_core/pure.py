"""Hot numeric kernels, pure-numpy lane.

Everything here is performance critical: these functions sit inside the
M-scale bisection, which itself sits inside the reweighting loop, which is
run for thousands of Monte Carlo trials.  ``_speedups.pyx`` mirrors this
module one-to-one; ``robust_scatter._core`` picks a lane at import time.

Conventions
-----------
* Generating functions are reduced to four structural families.  ``fam`` is
  one of the ``FAM_*`` codes and ``f0, f1, f2`` are its parameters:

  - ``FAM_KOTZ``:      ``(N, r, s)`` for ``phi(t) = t^N exp(-r t^s)``
  - ``FAM_PEARSON2``:  ``(m, -, -)`` for ``phi(t) = (1-t)^m`` on ``[0, 1]``
  - ``FAM_PEARSON7``:  ``(N, s, -)`` for ``phi(t) = (1 + t/s)^-N``
  - ``FAM_GENHYP``:    ``(nu, chi, psi)`` for
    ``phi(t) = u^nu K_nu(u)``, ``u = sqrt(psi (chi + t))``; ``nu`` is the
    Bessel order ``lambda - p/2``, precomputed by the caller.

* A kernel is encoded as a 12-float vector with the ``KP_*`` layout so the
  compiled lane can consume it without touching Python objects.

* ``phi_log_ratios`` and the rho/weight evaluators assume ``t > 0``
  elementwise; callers mask ``t == 0`` and apply the continuity limits.
"""

import numpy as np
from scipy.special import kve

FAM_KOTZ = 0
FAM_PEARSON2 = 1
FAM_PEARSON7 = 2
FAM_GENHYP = 3

KIND_SQ = 0  # proper S-q, q < 1 (double hard rejection)
KIND_SQ1 = 1  # raw S-q at q = 1 (unbounded rho)
KIND_ROCKE = 2
KIND_BISQUARE = 3
KIND_SHR = 4
KIND_MLE = 5

(
    KP_KIND,
    KP_SP,
    KP_Q,
    KP_A,
    KP_C,
    KP_S1,
    KP_RTA,
    KP_FAM,
    KP_F0,
    KP_F1,
    KP_F2,
    KP_GAMMA,
) = range(12)

KP_SIZE = 12


def _gh_log_ratios(t, nu, chi, psi):
    u = np.sqrt(psi * (chi + t))
    # Guard against kve overflow at tiny arguments; contributions from this
    # region are negligible in every integral/weighted sum we evaluate.
    ufloor = 2.0 * 10.0 ** (-250.0 / (abs(nu) + 2.0))
    u = np.maximum(u, ufloor)
    kn = kve(nu, u)
    ratio = kve(nu + 1.0, u) / kn
    logphi = nu * np.log(u) + np.log(kn) - u
    du_dt = psi / (2.0 * u)
    r1 = (2.0 * nu / u - ratio) * du_dt
    dratio = ratio * ratio - (2.0 * nu + 1.0) / u * ratio - 1.0
    dr1_du = -2.0 * psi * nu / u**3 - 0.5 * psi * (dratio * u - ratio) / u**2
    r2 = r1 * r1 + dr1_du * du_dt
    return logphi, r1, r2


def phi_log_ratios(t, fam, f0, f1, f2):
    """log phi(t), phi'(t)/phi(t), phi''(t)/phi(t) elementwise for t > 0.

    Outside the support (Pearson II with t >= 1) returns (-inf, 0, 0).
    """
    t = np.asarray(t, dtype=float)
    if fam == FAM_KOTZ:
        n, r, s = f0, f1, f2
        if n == 0.0 and s == 1.0:  # exponential branch (Gaussian-type)
            return -r * t, np.full(t.shape, -r), np.full(t.shape, r * r)
        ts = t**s
        logphi = n * np.log(t) - r * ts
        r1 = n / t - r * s * ts / t
        dr1 = -n / (t * t) + r * s * (1.0 - s) * ts / (t * t)
        return logphi, r1, r1 * r1 + dr1
    if fam == FAM_PEARSON2:
        m = f0
        inside = t < 1.0
        om = np.where(inside, 1.0 - t, 1.0)
        logphi = np.where(inside, m * np.log(om), -np.inf)
        r1 = np.where(inside, -m / om, 0.0)
        r2 = np.where(inside, m * (m - 1.0) / (om * om), 0.0)
        return logphi, r1, r2
    if fam == FAM_PEARSON7:
        n, s = f0, f1
        st = s + t
        logphi = -n * (np.log(st) - np.log(s))
        r1 = -n / st
        return logphi, r1, n * (n + 1.0) / (st * st)
    if fam == FAM_GENHYP:
        return _gh_log_ratios(t, f0, f1, f2)
    raise ValueError(f"unknown family code {fam}")


def sq_tilde(t, sp, q, fam, f0, f1, f2):
    """Unmonotonized S-q rho and weight (rho-tilde, w-tilde) for t > 0.

    The density power prefactor drops the beta_p scalar, which is legitimate
    for q < 1 and exact for q = 1 where the exponent vanishes.
    """
    t = np.asarray(t, dtype=float)
    sq = 1.0 - q
    logphi, r1, r2 = phi_log_ratios(t, fam, f0, f1, f2)
    if sq == 0.0:
        pref = np.isfinite(logphi).astype(float)
    else:
        pref = np.exp(sq * (logphi + sp * np.log(t)))
        pref = np.where(np.isfinite(logphi), pref, 0.0)
    rho_t = -pref * (t * r1 + sp)
    w_t = -pref * (sq * sp * sp / t + (2.0 * sq * sp + 1.0) * r1 - q * t * r1 * r1 + t * r2)
    return rho_t, w_t


def _shr_norm(c):
    # integral of the raw SHR weight: plateau of length 1 plus smoothstep tail
    return 1.0 + 0.5 * (c - 1.0)


def rho(t, kp):
    """Kernel rho(t) for t >= 0 (vectorized)."""
    t = np.asarray(t, dtype=float)
    kind = int(kp[KP_KIND])
    if kind == KIND_ROCKE:
        g = kp[KP_GAMMA]
        s = (t - 1.0) / g
        mid = (t - 1.0) / (4.0 * g) * (3.0 - s * s) + 0.5
        return np.where(t <= 1.0 - g, 0.0, np.where(t >= 1.0 + g, 1.0, mid))
    if kind == KIND_BISQUARE:
        return np.minimum(1.0, 1.0 - (1.0 - t) ** 3)
    if kind == KIND_SHR:
        c = kp[KP_C]
        z = _shr_norm(c)
        s = np.clip((t - 1.0) / (c - 1.0), 0.0, 1.0)
        tail = (c - 1.0) * (s - s**3 + 0.5 * s**4)
        return np.where(t >= c, 1.0, np.where(t <= 1.0, t / z, (1.0 + tail) / z))
    if kind in (KIND_SQ1, KIND_MLE):
        # clamping away from zero reproduces the t -> 0 limit analytically
        rt, _ = sq_tilde(np.maximum(t, 1e-150), kp[KP_SP], 1.0, int(kp[KP_FAM]), kp[KP_F0], kp[KP_F1], kp[KP_F2])
        return rt
    # proper S-q: 0 below a, affinely rescaled rho-tilde on (a, c), 1 above c
    a, c, s1, rta = kp[KP_A], kp[KP_C], kp[KP_S1], kp[KP_RTA]
    out = np.zeros(t.shape)
    out[t >= c] = 1.0
    band = (t > a) & (t < c)
    if np.any(band):
        rt, _ = sq_tilde(t[band], kp[KP_SP], kp[KP_Q], int(kp[KP_FAM]), kp[KP_F0], kp[KP_F1], kp[KP_F2])
        out[band] = np.clip(s1 * (rt - rta), 0.0, 1.0)
    return out


def weight(t, kp):
    """Kernel weight w(t) = rho'(t) for t >= 0 (vectorized).

    For the MLE kernel this is the location/scatter likelihood weight
    -2 phi'/phi, which is not the derivative of the scale rho.
    """
    t = np.asarray(t, dtype=float)
    kind = int(kp[KP_KIND])
    if kind == KIND_ROCKE:
        g = kp[KP_GAMMA]
        s = (t - 1.0) / g
        w = 0.75 / g * (1.0 - s * s)
        return np.where((t >= 1.0 - g) & (t <= 1.0 + g), np.maximum(w, 0.0), 0.0)
    if kind == KIND_BISQUARE:
        return np.where(t <= 1.0, 3.0 * (1.0 - t) ** 2, 0.0)
    if kind == KIND_SHR:
        c = kp[KP_C]
        z = _shr_norm(c)
        s = np.clip((t - 1.0) / (c - 1.0), 0.0, 1.0)
        return np.where(t >= c, 0.0, (1.0 - 3.0 * s * s + 2.0 * s**3) / z)
    if kind == KIND_MLE:
        _, r1, _ = phi_log_ratios(np.maximum(t, 1e-150), int(kp[KP_FAM]), kp[KP_F0], kp[KP_F1], kp[KP_F2])
        return -2.0 * r1
    if kind == KIND_SQ1:
        _, wt = sq_tilde(np.maximum(t, 1e-150), kp[KP_SP], 1.0, int(kp[KP_FAM]), kp[KP_F0], kp[KP_F1], kp[KP_F2])
        return wt
    a, c, s1 = kp[KP_A], kp[KP_C], kp[KP_S1]
    out = np.zeros(t.shape)
    band = (t > a) & (t < c)
    if np.any(band):
        _, wt = sq_tilde(t[band], kp[KP_SP], kp[KP_Q], int(kp[KP_FAM]), kp[KP_F0], kp[KP_F1], kp[KP_F2])
        out[band] = np.maximum(s1 * wt, 0.0)
    if a == 0.0:
        zero = t == 0.0
        if np.any(zero):
            out[zero] = _weight_limit_at_zero(kp)
    return out


def _weight_limit_at_zero(kp):
    # continuity limit for points sitting exactly at the location estimate;
    # evaluated slightly off zero because the Type-I weight limit involves
    # an analytic cancellation of 1/t terms
    _, wt = sq_tilde(np.array([1e-9]), kp[KP_SP], kp[KP_Q], int(kp[KP_FAM]), kp[KP_F0], kp[KP_F1], kp[KP_F2])
    w = kp[KP_S1] * wt[0]
    return float(w) if np.isfinite(w) else 0.0


def ratios1(t, fam, f0, f1, f2):
    """Scalar (log phi, phi'/phi, phi''/phi); t > 0."""
    logphi, r1, r2 = phi_log_ratios(np.float64(t), fam, f0, f1, f2)
    return float(logphi), float(r1), float(r2)


def rho1(t, kp):
    return float(rho(np.array([t]), kp)[0])


def weight1(t, kp):
    return float(weight(np.array([t]), kp)[0])


def mean_rho(d, kp, sigma):
    return float(np.mean(rho(d / sigma, kp)))


def m_scale(d, kp, b, hint=0.0):
    """Supremum root of mean(rho(d/sigma)) = b; mean rho is nonincreasing.

    Returns (sigma, flat) where ``flat`` signals that the solution set is an
    interval (degenerate data), in which case the supremum is returned.
    Raises ValueError when no root exists in (0, inf).
    """
    d = np.asarray(d, dtype=float)
    pos = d[d > 0.0]
    if pos.size == 0:
        raise ValueError("all distances are zero; M-scale undefined")
    if hint > 0.0:
        # a warm start from the previous solver iteration usually brackets
        # the root within +-30%, cutting most of the bisection work
        lo, hi = hint / 1.3, hint * 1.3
    else:
        lo = hi = float(np.median(pos))
    for _ in range(300):
        if mean_rho(d, kp, lo) >= b:
            break
        lo /= 8.0
    else:
        raise ValueError(f"mean rho never reaches b={b}; too few positive distances")
    for _ in range(300):
        if mean_rho(d, kp, hi) <= b:
            break
        hi *= 8.0
    else:
        raise ValueError("mean rho never drops to b; rho function misconfigured")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mean_rho(d, kp, mid) >= b:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    sigma = lo
    flat = abs(mean_rho(d, kp, 0.5 * sigma) - b) < 1e-12
    return sigma, flat
