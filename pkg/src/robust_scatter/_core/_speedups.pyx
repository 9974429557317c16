# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled lane of the numeric core; mirrors ``pure.py`` one-to-one.

The win over the numpy lane comes from fusing the kernel evaluation into
the M-scale bisection loop (no temporary arrays, no per-step dispatch).
"""

import numpy as np

from libc.math cimport INFINITY, exp, fabs, isfinite, log, pow, sqrt
from scipy.special.cython_special cimport kve

FAM_KOTZ = 0
FAM_PEARSON2 = 1
FAM_PEARSON7 = 2
FAM_GENHYP = 3

KIND_SQ = 0
KIND_SQ1 = 1
KIND_ROCKE = 2
KIND_BISQUARE = 3
KIND_SHR = 4
KIND_MLE = 5

KP_KIND = 0
KP_SP = 1
KP_Q = 2
KP_A = 3
KP_C = 4
KP_S1 = 5
KP_RTA = 6
KP_FAM = 7
KP_F0 = 8
KP_F1 = 9
KP_F2 = 10
KP_GAMMA = 11
KP_SIZE = 12


cdef inline void c_ratios(double t, int fam, double f0, double f1, double f2,
                          double* logphi, double* r1, double* r2) noexcept nogil:
    cdef double u, ufloor, kn, ratio, du, dratio, dr1, ts, om, st
    if fam == 0:  # Kotz (N, r, s)
        if f0 == 0.0 and f2 == 1.0:  # exponential branch (Gaussian-type)
            logphi[0] = -f1 * t
            r1[0] = -f1
            r2[0] = f1 * f1
            return
        ts = pow(t, f2)
        logphi[0] = f0 * log(t) - f1 * ts
        r1[0] = f0 / t - f1 * f2 * ts / t
        dr1 = -f0 / (t * t) + f1 * f2 * (1.0 - f2) * ts / (t * t)
        r2[0] = r1[0] * r1[0] + dr1
    elif fam == 1:  # Pearson II (m)
        if t < 1.0:
            om = 1.0 - t
            logphi[0] = f0 * log(om)
            r1[0] = -f0 / om
            r2[0] = f0 * (f0 - 1.0) / (om * om)
        else:
            logphi[0] = -INFINITY
            r1[0] = 0.0
            r2[0] = 0.0
    elif fam == 2:  # Pearson VII (N, s)
        st = f1 + t
        logphi[0] = -f0 * (log(st) - log(f1))
        r1[0] = -f0 / st
        r2[0] = f0 * (f0 + 1.0) / (st * st)
    else:  # generalized hyperbolic (nu, chi, psi)
        u = sqrt(f2 * (f1 + t))
        ufloor = 2.0 * pow(10.0, -250.0 / (fabs(f0) + 2.0))
        if u < ufloor:
            u = ufloor
        kn = kve(f0, u)
        ratio = kve(f0 + 1.0, u) / kn
        logphi[0] = f0 * log(u) + log(kn) - u
        du = f2 / (2.0 * u)
        r1[0] = (2.0 * f0 / u - ratio) * du
        dratio = ratio * ratio - (2.0 * f0 + 1.0) / u * ratio - 1.0
        dr1 = -2.0 * f2 * f0 / (u * u * u) - 0.5 * f2 * (dratio * u - ratio) / (u * u)
        r2[0] = r1[0] * r1[0] + dr1 * du


cdef inline void c_sq_tilde(double t, double sp, double q, int fam,
                            double f0, double f1, double f2,
                            double* rho_out, double* w_out) noexcept nogil:
    cdef double logphi = 0.0, r1 = 0.0, r2 = 0.0, sq, pref
    c_ratios(t, fam, f0, f1, f2, &logphi, &r1, &r2)
    sq = 1.0 - q
    if sq == 0.0:
        pref = 1.0 if isfinite(logphi) else 0.0
    elif isfinite(logphi):
        pref = exp(sq * (logphi + sp * log(t)))
    else:
        pref = 0.0
    rho_out[0] = -pref * (t * r1 + sp)
    w_out[0] = -pref * (sq * sp * sp / t + (2.0 * sq * sp + 1.0) * r1 - q * t * r1 * r1 + t * r2)


cdef inline double c_rho(double t, const double[::1] kp) noexcept nogil:
    cdef int kind = <int> kp[0]
    cdef double g, s, tail, z, c, rt, wt
    if kind == 2:  # Rocke
        g = kp[11]
        if t <= 1.0 - g:
            return 0.0
        if t >= 1.0 + g:
            return 1.0
        s = (t - 1.0) / g
        return (t - 1.0) / (4.0 * g) * (3.0 - s * s) + 0.5
    if kind == 3:  # bisquare
        s = 1.0 - (1.0 - t) * (1.0 - t) * (1.0 - t)
        return s if s < 1.0 else 1.0
    if kind == 4:  # SHR
        c = kp[4]
        z = 1.0 + 0.5 * (c - 1.0)
        if t >= c:
            return 1.0
        if t <= 1.0:
            return t / z
        s = (t - 1.0) / (c - 1.0)
        tail = (c - 1.0) * (s - s * s * s + 0.5 * s * s * s * s)
        return (1.0 + tail) / z
    if kind == 1 or kind == 5:  # raw q=1 / MLE scale rho
        c_sq_tilde(t if t > 1e-150 else 1e-150, kp[1], 1.0, <int> kp[7], kp[8], kp[9], kp[10], &rt, &wt)
        return rt
    # proper S-q
    if t <= kp[3]:
        return 0.0
    if t >= kp[4]:
        return 1.0
    c_sq_tilde(t, kp[1], kp[2], <int> kp[7], kp[8], kp[9], kp[10], &rt, &wt)
    rt = kp[5] * (rt - kp[6])
    if rt < 0.0:
        return 0.0
    return rt if rt < 1.0 else 1.0


cdef inline double c_weight(double t, const double[::1] kp) noexcept nogil:
    cdef int kind = <int> kp[0]
    cdef double g, s, z, c, rt, wt, logphi, r1, r2
    if kind == 2:  # Rocke
        g = kp[11]
        if t < 1.0 - g or t > 1.0 + g:
            return 0.0
        s = (t - 1.0) / g
        wt = 0.75 / g * (1.0 - s * s)
        return wt if wt > 0.0 else 0.0
    if kind == 3:  # bisquare
        if t > 1.0:
            return 0.0
        return 3.0 * (1.0 - t) * (1.0 - t)
    if kind == 4:  # SHR
        c = kp[4]
        z = 1.0 + 0.5 * (c - 1.0)
        if t >= c:
            return 0.0
        if t <= 1.0:
            return 1.0 / z
        s = (t - 1.0) / (c - 1.0)
        return (1.0 - 3.0 * s * s + 2.0 * s * s * s) / z
    if kind == 5:  # MLE
        c_ratios(t if t > 1e-150 else 1e-150, <int> kp[7], kp[8], kp[9], kp[10], &logphi, &r1, &r2)
        return -2.0 * r1
    if kind == 1:  # raw q=1
        c_sq_tilde(t if t > 1e-150 else 1e-150, kp[1], 1.0, <int> kp[7], kp[8], kp[9], kp[10], &rt, &wt)
        return wt
    # proper S-q
    if t >= kp[4]:
        return 0.0
    if t <= kp[3]:
        if kp[3] > 0.0 or t < kp[3]:
            return 0.0
        t = 1e-9  # Type-I limit at the origin
    c_sq_tilde(t, kp[1], kp[2], <int> kp[7], kp[8], kp[9], kp[10], &rt, &wt)
    wt = kp[5] * wt
    if not isfinite(wt):
        return 0.0
    return wt if wt > 0.0 else 0.0


def phi_log_ratios(t, fam, f0, f1, f2):
    cdef int cfam = fam
    cdef double cf0 = f0, cf1 = f1, cf2 = f2
    cdef double logphi, r1, r2
    arr = np.asarray(t, dtype=np.float64)
    if arr.ndim == 0:
        c_ratios(float(arr), cfam, cf0, cf1, cf2, &logphi, &r1, &r2)
        return logphi, r1, r2
    cdef double[::1] tv = np.ascontiguousarray(arr)
    cdef Py_ssize_t n = tv.shape[0], i
    out_l = np.empty(n)
    out_1 = np.empty(n)
    out_2 = np.empty(n)
    cdef double[::1] lv = out_l, v1 = out_1, v2 = out_2
    with nogil:
        for i in range(n):
            c_ratios(tv[i], cfam, cf0, cf1, cf2, &lv[i], &v1[i], &v2[i])
    return out_l, out_1, out_2


def sq_tilde(t, sp, q, fam, f0, f1, f2):
    cdef int cfam = fam
    cdef double csp = sp, cq = q, cf0 = f0, cf1 = f1, cf2 = f2
    cdef double rt, wt
    arr = np.asarray(t, dtype=np.float64)
    if arr.ndim == 0:
        c_sq_tilde(float(arr), csp, cq, cfam, cf0, cf1, cf2, &rt, &wt)
        return rt, wt
    cdef double[::1] tv = np.ascontiguousarray(arr)
    cdef Py_ssize_t n = tv.shape[0], i
    out_r = np.empty(n)
    out_w = np.empty(n)
    cdef double[::1] rv = out_r, wv = out_w
    with nogil:
        for i in range(n):
            c_sq_tilde(tv[i], csp, cq, cfam, cf0, cf1, cf2, &rv[i], &wv[i])
    return out_r, out_w


def rho(t, kp):
    cdef const double[::1] kpv = np.ascontiguousarray(kp, dtype=np.float64)
    cdef double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
    cdef Py_ssize_t n = tv.shape[0], i
    out = np.empty(n)
    cdef double[::1] ov = out
    with nogil:
        for i in range(n):
            ov[i] = c_rho(tv[i], kpv)
    return out


def weight(t, kp):
    cdef const double[::1] kpv = np.ascontiguousarray(kp, dtype=np.float64)
    cdef double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
    cdef Py_ssize_t n = tv.shape[0], i
    out = np.empty(n)
    cdef double[::1] ov = out
    with nogil:
        for i in range(n):
            ov[i] = c_weight(tv[i], kpv)
    return out


def ratios1(double t, int fam, double f0, double f1, double f2):
    cdef double logphi, r1, r2
    c_ratios(t, fam, f0, f1, f2, &logphi, &r1, &r2)
    return logphi, r1, r2


def rho1(double t, kp):
    cdef const double[::1] kpv = np.ascontiguousarray(kp, dtype=np.float64)
    return c_rho(t, kpv)


def weight1(double t, kp):
    cdef const double[::1] kpv = np.ascontiguousarray(kp, dtype=np.float64)
    return c_weight(t, kpv)


cdef double c_mean_rho(const double[::1] d, const double[::1] kp, double sigma) noexcept nogil:
    cdef Py_ssize_t n = d.shape[0], i
    cdef double acc = 0.0
    for i in range(n):
        acc += c_rho(d[i] / sigma, kp)
    return acc / n


def mean_rho(d, kp, sigma):
    cdef const double[::1] dv = np.ascontiguousarray(d, dtype=np.float64)
    cdef const double[::1] kpv = np.ascontiguousarray(kp, dtype=np.float64)
    return c_mean_rho(dv, kpv, sigma)


def m_scale(d, kp, double b, double hint=0.0):
    cdef const double[::1] dv = np.ascontiguousarray(d, dtype=np.float64)
    cdef const double[::1] kpv = np.ascontiguousarray(kp, dtype=np.float64)
    darr = np.asarray(d, dtype=np.float64)
    pos = darr[darr > 0.0]
    if pos.size == 0:
        raise ValueError("all distances are zero; M-scale undefined")
    cdef double lo, hi, mid, sigma
    if hint > 0.0:
        lo = hint / 1.3
        hi = hint * 1.3
    else:
        lo = hi = float(np.median(pos))
    cdef int it
    cdef bint ok = False
    with nogil:
        for it in range(300):
            if c_mean_rho(dv, kpv, lo) >= b:
                ok = True
                break
            lo /= 8.0
    if not ok:
        raise ValueError(f"mean rho never reaches b={b}; too few positive distances")
    ok = False
    with nogil:
        for it in range(300):
            if c_mean_rho(dv, kpv, hi) <= b:
                ok = True
                break
            hi *= 8.0
    if not ok:
        raise ValueError("mean rho never drops to b; rho function misconfigured")
    with nogil:
        for it in range(200):
            mid = 0.5 * (lo + hi)
            if c_mean_rho(dv, kpv, mid) >= b:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-15 * hi:
                break
    sigma = lo
    flat = fabs(c_mean_rho(dv, kpv, 0.5 * sigma) - b) < 1e-12
    return sigma, bool(flat)
