"""Rho and weight functions for the S-q, S-Rocke, S-bisquare, SHR, and MLE
estimators.

The S-q rho is the density-power-weighted scale-MLE rho, monotonized by
double hard rejection: weights vanish below the inlier rejection point ``a``
and above the outlier rejection point ``c``.  For Kotz, Pearson II, and
Pearson VII shapes (hence Gaussian, t, Cauchy) the rejection points solve a
quadratic in closed form; generalized-hyperbolic shapes fall back to a
bracketed root finder on the weight function.

All kernels are immutable value objects; ``rho`` and ``weight`` are pure and
vectorized.  ``weight`` is the derivative of ``rho`` for every proper
kernel.  The MLE kernel is not proper: its ``weight`` is the location and
scatter likelihood weight ``-2 phi'/phi``, which is not the derivative of
its (unbounded) scale rho.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import _core
from .elliptical import GeneratingFunction
from .errors import TuningError

__all__ = [
    "SqType",
    "QRange",
    "valid_q_range",
    "rejection_points",
    "rejection_points_numeric",
    "sq_rho_tilde",
    "sq_weight_tilde",
    "SqKernel",
    "RockeKernel",
    "BisquareKernel",
    "ShrKernel",
    "MleKernel",
]

_ROOT_GRID_LO = 1e-8
_ROOT_GRID_HI = 1e8
_ROOT_GRID_N = 512


class SqType(enum.Enum):
    TYPE_I = "type1"  # single weight-function root: a = 0
    TYPE_II = "type2"  # two roots: inliers are hard-rejected too
    Q_EQUALS_ONE = "q1"  # raw unbounded rho, not a proper S-kernel


@dataclass(frozen=True)
class QRange:
    """Valid tuning range for the S-q parameter q at one family.

    ``gap`` is an open interval just below 1 that is excluded (Pearson II's
    ``q = 1 or q < 1 - 1/m`` rule; the generalized-hyperbolic numerical
    exclusion).  ``lower_heuristic`` marks an empirically probed lower bound
    rather than a closed-form one.
    """

    lower: float
    upper: float = 1.0
    gap: tuple | None = None
    lower_heuristic: bool = False

    def contains(self, q):
        if not q <= self.upper:
            return False
        if not q > self.lower:
            return False
        if self.gap is not None and self.gap[0] < q < self.gap[1]:
            return False
        return True

    def validate(self, q):
        if q > self.upper:
            raise TuningError(f"q={q} violates q <= {self.upper}")
        if q <= self.lower:
            kind = "empirical" if self.lower_heuristic else "closed-form"
            raise TuningError(f"q={q} violates the {kind} lower bound q > {self.lower}")
        if self.gap is not None and self.gap[0] < q < self.gap[1]:
            raise TuningError(f"q={q} falls in the excluded interval {self.gap}")


def _wtilde_bracket(gen, q, t):
    """Bracketed factor of the raw S-q weight; its zeros locate a and c."""
    t = np.asarray(t, dtype=float)
    sp = gen.s_p
    sq = 1.0 - q
    _, r1, r2 = gen.log_ratios(t)
    return sq * sp * sp / t + (2.0 * sq * sp + 1.0) * r1 - q * t * r1 * r1 + t * r2


def rejection_points_numeric(gen, q):
    """(a, c, type) by scanning the weight function for sign changes.

    This is the generic route used for generalized-hyperbolic shapes and as
    an independent cross-check of the closed forms.
    """
    if q >= 1.0:
        raise TuningError("rejection points exist only for q < 1")
    hi = min(_ROOT_GRID_HI, gen.support_upper * (1.0 - 1e-12))
    grid = np.geomspace(_ROOT_GRID_LO, hi, _ROOT_GRID_N)
    vals = _wtilde_bracket(gen, q, grid)
    ok = np.isfinite(vals)
    grid, vals = grid[ok], vals[ok]
    sign = np.sign(vals)
    crossings = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    roots = [
        brentq(lambda t: float(_wtilde_bracket(gen, q, t)), grid[i], grid[i + 1], xtol=1e-14, maxiter=200)
        for i in crossings
    ]
    if len(roots) == 1:
        a, c = 0.0, roots[0]
        sq_type = SqType.TYPE_I
    elif len(roots) == 2:
        a, c = roots
        sq_type = SqType.TYPE_II
    else:
        raise TuningError(
            f"weight function has {len(roots)} roots on [{grid[0]:.3g}, {grid[-1]:.3g}] "
            f"(expected 1 or 2); q={q} is outside the valid range for {gen.family.value}"
        )
    # the weight must be positive strictly between a and c
    mid = math.sqrt(max(a, _ROOT_GRID_LO) * c)
    if float(_wtilde_bracket(gen, q, mid)) >= 0.0:
        raise TuningError(f"weight function is not positive between rejection points for q={q}")
    return a, c, sq_type


def rejection_points(gen, q):
    """Inlier and outlier rejection points (a, c) plus the S-q type.

    Kotz, Pearson II, and Pearson VII shapes use the closed-form quadratic
    roots; generalized-hyperbolic shapes are solved numerically.
    """
    if q >= 1.0:
        raise TuningError("rejection points exist only for q < 1")
    valid_q_range(gen).validate(q)
    sp = gen.s_p
    sq = 1.0 - q
    fam = gen.fam_code
    if fam == _core.FAM_KOTZ:
        n, r, s = gen.fparams
        disc = s * s + 4.0 * s * sq * n + 4.0 * s * sp * sq
        if disc < 0:
            raise TuningError(f"q={q} gives no real rejection points (Kotz bound violated)")
        root = math.sqrt(disc)
        num = s + 2.0 * sq * n + 2.0 * sp * sq
        den = 2.0 * sq * r * s
        a = ((num - root) / den) ** (1.0 / s)
        c = ((num + root) / den) ** (1.0 / s)
    elif fam == _core.FAM_PEARSON2:
        (m, _, _) = gen.fparams
        disc = m * m * (4.0 * sq * sp + 1.0) + 4.0 * m * sq * sp * sp
        root = math.sqrt(disc)
        num = 2.0 * sq * sp * sp + m * (2.0 * sq * sp + 1.0)
        den = 2.0 * (sq * sp * sp + m * (2.0 * sq * sp + m * sq))
        a = (num - root) / den
        c = (num + root) / den
    elif fam == _core.FAM_PEARSON7:
        n, s, _ = gen.fparams
        disc = 4.0 * n * n * sq * sp - 4.0 * n * sq * sp * sp + n * n
        root = math.sqrt(disc)
        num = 2.0 * n * sq * sp + n - 2.0 * sq * sp * sp
        den = 2.0 * sq * (sp * sp - 2.0 * n * sp + n * n)
        a = s * (num - root) / den
        c = s * (num + root) / den
    else:
        return rejection_points_numeric(gen, q)
    if not (np.isfinite(a) and np.isfinite(c)) or c <= 0 or c <= a:
        raise TuningError(f"q={q} yields invalid rejection points (a={a}, c={c})")
    if a <= 1e-13 * c:
        return 0.0, float(c), SqType.TYPE_I
    return float(a), float(c), SqType.TYPE_II


def _probe_gh_lower(gen):
    # runtime validity probe: walk q downward until the root structure
    # breaks, then bisect to tighten the boundary
    candidates = [0.99, 0.9, 0.5, 0.0, -1.0, -2.0, -4.0, -8.0, -16.0, -32.0]
    last_good = None
    first_bad = None
    for q in candidates:
        try:
            rejection_points_numeric(gen, q)
            last_good = q
        except TuningError:
            first_bad = q
            break
    if last_good is None:
        return None
    if first_bad is None:
        return candidates[-1] - 1.0
    for _ in range(8):
        mid = 0.5 * (last_good + first_bad)
        try:
            rejection_points_numeric(gen, mid)
            last_good = mid
        except TuningError:
            first_bad = mid
    # strictly below the smallest q observed to work
    return last_good - 1e-9 * max(1.0, abs(last_good))


def valid_q_range(gen):
    """Tuning restrictions on q for one family."""
    sp = gen.s_p
    fam = gen.fam_code
    if fam == _core.FAM_KOTZ:
        n, _, s = gen.fparams
        if -1.0 - sp < n < -sp:
            return QRange(lower=1.0 + s / (4.0 * (sp + n)))
        return QRange(lower=-math.inf)
    if fam == _core.FAM_PEARSON2:
        (m, _, _) = gen.fparams
        return QRange(lower=-math.inf, gap=(1.0 - 1.0 / m, 1.0))
    if fam == _core.FAM_PEARSON7:
        return QRange(lower=-math.inf)
    nu, chi, psi = gen.fparams
    lam = nu + gen.p / 2.0
    gap = (0.998, 1.0)
    if chi == 0.0 and lam < 1.0:
        probed = _probe_gh_lower(gen)
        lower = probed if probed is not None else 0.99
        return QRange(lower=lower, gap=gap, lower_heuristic=True)
    return QRange(lower=-math.inf, gap=gap)


def _as_scalar_or_array(t, out):
    return float(out[0]) if np.ndim(t) == 0 else out


class _KernelBase:
    """Shared vectorized evaluation against the packed parameter vector."""

    proper = True

    def rho(self, t):
        arr = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(arr < 0):
            raise ValueError("t must be nonnegative")
        return _as_scalar_or_array(t, _core.rho(arr, self._kp))

    def weight(self, t):
        arr = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(arr < 0):
            raise ValueError("t must be nonnegative")
        return _as_scalar_or_array(t, _core.weight(arr, self._kp))

    @property
    def rho_at_inf(self):
        return 1.0 if self.proper else math.inf


@dataclass(frozen=True)
class SqKernel(_KernelBase):
    """Density-based tunable S-estimator kernel for one elliptical family."""

    gen: GeneratingFunction
    q: float
    a: float = field(init=False, compare=False, repr=False)
    c: float = field(init=False, compare=False, repr=False)
    s1: float = field(init=False, compare=False, repr=False)
    sq_type: SqType = field(init=False, compare=False, repr=False)
    _kp: np.ndarray = field(init=False, compare=False, repr=False)

    kind = "sq"

    def __post_init__(self):
        object.__setattr__(self, "q", float(self.q))
        q = self.q
        gen = self.gen
        if q > 1.0:
            raise TuningError("q must be <= 1")
        kp = np.zeros(_core.KP_SIZE)
        kp[_core.KP_SP] = gen.s_p
        kp[_core.KP_Q] = q
        kp[_core.KP_FAM] = gen.fam_code
        kp[_core.KP_F0], kp[_core.KP_F1], kp[_core.KP_F2] = gen.fparams
        if q == 1.0:
            object.__setattr__(self, "a", 0.0)
            object.__setattr__(self, "c", math.inf)
            object.__setattr__(self, "s1", 1.0)
            object.__setattr__(self, "sq_type", SqType.Q_EQUALS_ONE)
            kp[_core.KP_KIND] = _core.KIND_SQ1
            kp[_core.KP_A], kp[_core.KP_C], kp[_core.KP_S1] = 0.0, math.inf, 1.0
            object.__setattr__(self, "_kp", kp)
            return
        a, c, sq_type = rejection_points(gen, q)
        rta = 0.0 if a == 0.0 else float(self.rho_tilde(a))
        rtc = float(self.rho_tilde(c))
        if not rtc > rta:
            raise TuningError(f"degenerate S-q normalization at q={q} (rho-tilde span {rtc - rta:.3e})")
        s1 = 1.0 / (rtc - rta)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "s1", s1)
        object.__setattr__(self, "sq_type", sq_type)
        kp[_core.KP_KIND] = _core.KIND_SQ
        kp[_core.KP_A], kp[_core.KP_C], kp[_core.KP_S1], kp[_core.KP_RTA] = a, c, s1, rta
        object.__setattr__(self, "_kp", kp)

    @property
    def p(self):
        return self.gen.p

    @property
    def proper(self):
        return self.q < 1.0

    def rho_tilde(self, t):
        """Raw (unmonotonized) S-q rho; beta_p is dropped for q < 1."""
        arr = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros(arr.shape)
        pos = arr > 0
        if np.any(pos):
            rho_t, _ = _core.sq_tilde(arr[pos], self.gen.s_p, self.q, self.gen.fam_code, *self.gen.fparams)
            out[pos] = rho_t
        if np.any(~pos):
            out[~pos] = 0.0 if self.gen.s_p > 0 or self.q < 1.0 else -self.gen.s_p
        return _as_scalar_or_array(t, out)

    def weight_tilde(self, t):
        """Derivative of ``rho_tilde``."""
        arr = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros(arr.shape)
        pos = arr > 0
        if np.any(pos):
            _, w_t = _core.sq_tilde(arr[pos], self.gen.s_p, self.q, self.gen.fam_code, *self.gen.fparams)
            out[pos] = w_t
        return _as_scalar_or_array(t, out)


def sq_rho_tilde(kernel, t):
    return kernel.rho_tilde(t)


def sq_weight_tilde(kernel, t):
    return kernel.weight_tilde(t)


@dataclass(frozen=True)
class RockeKernel(_KernelBase):
    """Rocke's smoothed hard-rejection S-kernel; gamma in (0, 1]."""

    gamma: float
    _kp: np.ndarray = field(init=False, compare=False, repr=False)

    kind = "rocke"

    def __post_init__(self):
        object.__setattr__(self, "gamma", float(self.gamma))
        if not 0.0 < self.gamma <= 1.0:
            raise TuningError("Rocke gamma must lie in (0, 1]")
        kp = np.zeros(_core.KP_SIZE)
        kp[_core.KP_KIND] = _core.KIND_ROCKE
        kp[_core.KP_GAMMA] = self.gamma
        kp[_core.KP_A] = 1.0 - self.gamma
        kp[_core.KP_C] = 1.0 + self.gamma
        object.__setattr__(self, "_kp", kp)

    @property
    def a(self):
        return 1.0 - self.gamma

    @property
    def c(self):
        return 1.0 + self.gamma


@dataclass(frozen=True)
class BisquareKernel(_KernelBase):
    """Tukey bisquare S-kernel (no tuning parameter)."""

    _kp: np.ndarray = field(init=False, compare=False, repr=False)

    kind = "bisquare"
    a = 0.0
    c = 1.0

    def __post_init__(self):
        kp = np.zeros(_core.KP_SIZE)
        kp[_core.KP_KIND] = _core.KIND_BISQUARE
        kp[_core.KP_A], kp[_core.KP_C] = 0.0, 1.0
        object.__setattr__(self, "_kp", kp)


@dataclass(frozen=True)
class ShrKernel(_KernelBase):
    """Smoothed-hard-rejection kernel: unit plateau, cubic decay to c_shr.

    The weight is 1 on [0, 1], the smoothstep 1 - 3 s^2 + 2 s^3 with
    s = (t-1)/(c_shr-1) on (1, c_shr), and 0 beyond; rho is its integral
    rescaled so rho(inf) = 1 (so ``weight`` carries the same 1/Z factor,
    which cancels everywhere weights enter).  c_shr > 1 tunes efficiency.
    """

    c_shr: float
    _kp: np.ndarray = field(init=False, compare=False, repr=False)

    kind = "shr"
    a = 0.0

    def __post_init__(self):
        object.__setattr__(self, "c_shr", float(self.c_shr))
        if not self.c_shr > 1.0:
            raise TuningError("SHR cutoff c_shr must be > 1")
        kp = np.zeros(_core.KP_SIZE)
        kp[_core.KP_KIND] = _core.KIND_SHR
        kp[_core.KP_C] = self.c_shr
        kp[_core.KP_S1] = 1.0 / (1.0 + 0.5 * (self.c_shr - 1.0))
        object.__setattr__(self, "_kp", kp)

    @property
    def c(self):
        return self.c_shr


@dataclass(frozen=True)
class MleKernel(_KernelBase):
    """Maximum-likelihood weights for one family; not a proper S-kernel.

    ``weight`` is the location/scatter likelihood weight -2 phi'/phi.
    ``rho`` is the (unbounded) scale-MLE rho, provided for the asymptotic
    scale terms; it is not the antiderivative of ``weight``.
    """

    gen: GeneratingFunction
    _kp: np.ndarray = field(init=False, compare=False, repr=False)

    kind = "mle"
    proper = False
    a = 0.0
    c = math.inf

    def __post_init__(self):
        kp = np.zeros(_core.KP_SIZE)
        kp[_core.KP_KIND] = _core.KIND_MLE
        kp[_core.KP_SP] = self.gen.s_p
        kp[_core.KP_Q] = 1.0
        kp[_core.KP_C] = math.inf
        kp[_core.KP_FAM] = self.gen.fam_code
        kp[_core.KP_F0], kp[_core.KP_F1], kp[_core.KP_F2] = self.gen.fparams
        object.__setattr__(self, "_kp", kp)

    @property
    def p(self):
        return self.gen.p
