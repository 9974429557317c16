"""Monte Carlo experiment harness: divergence metrics, shift contamination,
finite-sample efficiency, robustness curves, initialization-stability, and
iteration-count studies.

Every trial draws its data from a counter-based stream keyed by
(seed, trial), so reports are bitwise reproducible for a fixed config
regardless of execution order or thread count.  Estimators within a trial
share the data and the starting point (common random numbers).
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache, partial

import numpy as np

from .elliptical import EllipticalModel, GeneratingFunction
from .errors import DegenerateDataError, SpecFormatError, TuningError
from .kernels import BisquareKernel, RockeKernel, ShrKernel, SqKernel
from .solver import (
    FitResult,
    b_max_breakdown,
    fit_mle,
    fit_mm_shr,
    fit_s,
    initial_estimate,
    kl_divergence,
)
from . import asymptotics
from .specs import gen_from_spec, parse_estimator_spec

__all__ = [
    "DEFAULT_K_GRID",
    "ExperimentConfig",
    "kl_shape_divergence",
    "contaminate",
    "resolve_estimators",
    "finite_sample_efficiency",
    "robustness_curve",
    "stability_experiment",
    "iteration_study",
]

DEFAULT_K_GRID = (2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 20.0, 1e2, 1e3, 1e6)
ZERO_REPORT_TOL = 1e-10  # paired divergences below the convergence criterion print as 0
MAX_FAILURE_FRACTION = 0.10


def kl_shape_divergence(mu, sigma, mu_hat, sigma_hat):
    """Gaussian KL divergence; drop-in both as metric and convergence rule."""
    return kl_divergence(mu, sigma, mu_hat, sigma_hat)


def contaminate(data, epsilon, k):
    """Replace the first coordinate of the first floor(eps*n) rows with k."""
    if not 0.0 <= epsilon < 1.0:
        raise ValueError("epsilon must lie in [0, 1)")
    x = np.array(data, dtype=float)
    m = int(math.floor(epsilon * x.shape[0]))
    if m > 0:
        x[:m, 0] = k
    return x


@dataclass(frozen=True)
class ExperimentConfig:
    """One Monte Carlo experiment: model, sample size, contamination,
    estimators, and tuning protocol.

    ``tune_target`` requests tuning every tunable estimator to that
    asymptotic shape efficiency; ``tune_match_rocke_max`` instead matches
    everything to the maximum achievable S-Rocke efficiency (the protocol
    used at small p, where the Rocke ceiling is low).  Estimators whose
    achievable range does not contain the target are resolved to their
    closest achievable tuning.
    """

    model: GeneratingFunction
    n: int
    epsilon: float = 0.0
    k_grid: tuple = DEFAULT_K_GRID
    trials: int = 50
    seed: int = 0
    estimators: tuple = ("estimator=sq q=0.9",)
    tune_target: float | None = None
    tune_match_rocke_max: bool = False
    threads: int = 1

    def __post_init__(self):
        if not isinstance(self.model, GeneratingFunction):
            object.__setattr__(self, "model", gen_from_spec(self.model))
        if isinstance(self.estimators, str):
            object.__setattr__(self, "estimators", (self.estimators,))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        object.__setattr__(self, "k_grid", tuple(float(k) for k in self.k_grid))
        if not 0.0 <= self.epsilon < 0.5:
            raise ValueError("epsilon must lie in [0, 1/2)")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.n < self.model.p + 1:
            raise ValueError(f"need n >= p+1 (n={self.n}, p={self.model.p})")

    @property
    def p(self):
        return self.model.p

    @property
    def b(self):
        return b_max_breakdown(self.n, self.p)

    @classmethod
    def from_mapping(cls, kv):
        """Build from a parsed key=value config file (see the CLI docs)."""
        required = ("model", "n")
        for key in required:
            if key not in kv:
                raise SpecFormatError(f"config is missing required key {key!r}")
        estimators = kv.get("estimator", "estimator=sq q=0.9")
        if isinstance(estimators, str):
            estimators = (estimators,)
        tune = kv.get("tune")
        tune_target = None
        match_rocke = False
        if tune is not None:
            if tune == "match-rocke-max":
                match_rocke = True
            else:
                tune_target = float(tune)
        return cls(
            model=gen_from_spec(kv["model"]),
            n=int(kv["n"]),
            epsilon=float(kv.get("epsilon", 0.0)),
            k_grid=tuple(float(v) for v in str(kv.get("k_grid", "")).split(",") if v)
            or DEFAULT_K_GRID,
            trials=int(kv.get("trials", 50)),
            seed=int(kv.get("seed", 0)),
            estimators=tuple(estimators),
            tune_target=tune_target,
            tune_match_rocke_max=match_rocke,
            threads=int(kv.get("threads", 1)),
        )


@dataclass(frozen=True)
class ResolvedEstimator:
    """A concrete estimator: label, fit dispatch kind, and its kernel."""

    label: str
    kind: str
    kernel: object = None
    gen: GeneratingFunction = None

    def fit(self, data, b, init):
        if self.kind in ("sq", "rocke", "bisquare"):
            return fit_s(data, self.kernel, b=b, init=init)
        if self.kind == "shr":
            return fit_mm_shr(data, self.kernel, b=b, init=init)
        if self.kind == "mle":
            return fit_mle(data, self.gen, init=init)
        if self.kind == "sample":
            return _sample_estimator(data)
        raise ValueError(f"unknown estimator kind {self.kind!r}")


def _sample_estimator(data):
    x = np.asarray(data, dtype=float)
    p = x.shape[1]
    mu = x.mean(axis=0)
    sigma = np.cov(x, rowvar=False, bias=True)
    sigma = 0.5 * (sigma + sigma.T)
    sign, logdet = np.linalg.slogdet(sigma)
    if sign <= 0:
        raise DegenerateDataError("sample covariance is singular")
    scale = math.exp(logdet / p)
    return FitResult(mu, sigma / scale, sigma, scale, 1, True, 0.0)


def _closest_tuning(kind, gen, b, target):
    """Tune to the target efficiency, falling back to the nearest achievable
    end of the estimator's range when the target is out of reach."""
    try:
        return asymptotics.tune_to_efficiency(kind, gen, b, target)
    except TuningError as exc:
        if exc.argmax is not None:
            return exc.argmax
        raise


@lru_cache(maxsize=64)
def _resolve_cached(config):
    gen = config.model
    b = config.b
    target = config.tune_target
    if config.tune_match_rocke_max:
        _, target = asymptotics.max_efficiency("rocke", gen, b)
    out = []
    for spec_text in config.estimators:
        spec = parse_estimator_spec(spec_text)
        tuning = spec.tuning
        if spec.tunable and tuning is None:
            if target is None:
                raise SpecFormatError(
                    f"estimator {spec.kind!r} has no tuning parameter and the config sets no tune target"
                )
            tuning = _closest_tuning(spec.kind, gen, b, target)
        if spec.kind == "sq":
            kernel = SqKernel(gen, tuning)
            label = f"sq(q={tuning:.6g})"
        elif spec.kind == "rocke":
            kernel = RockeKernel(tuning)
            label = f"rocke(gamma={tuning:.6g})"
        elif spec.kind == "shr":
            kernel = ShrKernel(tuning)
            label = f"shr(c={tuning:.6g})"
        elif spec.kind == "bisquare":
            kernel, label = BisquareKernel(), "bisquare"
        elif spec.kind == "mle":
            kernel, label = None, "mle"
        else:
            kernel, label = None, "sample"
        out.append(ResolvedEstimator(label=label, kind=spec.kind, kernel=kernel, gen=gen))
    return tuple(out)


def resolve_estimators(config):
    """Concrete kernels for the config's estimator specs (tuning applied)."""
    return _resolve_cached(config)


_MODEL_CACHE = {}


def _model_for(gen):
    model = _MODEL_CACHE.get(gen)
    if model is None:
        model = EllipticalModel(gen)
        _MODEL_CACHE[gen] = model
    return model


@dataclass(frozen=True)
class _TrialTask:
    config: ExperimentConfig
    what: str
    k_values: tuple = ()
    variant: str = "shape"
    include_mle: bool = False


def _one_trial(task, trial):
    """All per-trial work; returns a dict of results keyed by estimator."""
    cfg = task.config
    model = _model_for(cfg.model)
    estimators = resolve_estimators(cfg)
    b = cfg.b
    x_clean = model.sample(cfg.n, (cfg.seed, trial))
    mu_true = model.mu
    omega_true = model.shape
    out = {}
    if task.what == "efficiency":
        init = initial_estimate(x_clean)
        fits = {}
        try:
            fits["__mle__"] = fit_mle(x_clean, cfg.model, init=init)
        except DegenerateDataError:
            return {"failed": True}
        for est in estimators:
            try:
                fits[est.label] = (
                    fits["__mle__"] if est.kind in ("mle", "sample") and _is_model_mle(est, cfg) else est.fit(x_clean, b, init)
                )
            except DegenerateDataError:
                out[est.label] = None
                continue
            out[est.label] = _divergences(task.variant, mu_true, omega_true, model, fits[est.label])
        out["__mle__"] = _divergences(task.variant, mu_true, omega_true, model, fits["__mle__"])
        return out
    if task.what in ("robustness", "iterations"):
        for k in task.k_values:
            x = contaminate(x_clean, cfg.epsilon, k) if cfg.epsilon > 0 else x_clean
            init = initial_estimate(x)
            for est in estimators:
                try:
                    fit = est.fit(x, b, init)
                    div = kl_divergence(mu_true, omega_true, mu_true, fit.omega_hat)
                    out[(est.label, k)] = (div, fit.iterations, fit.converged)
                except DegenerateDataError:
                    out[(est.label, k)] = None
            if cfg.epsilon == 0:
                break  # k is irrelevant without contamination
        return out
    if task.what == "stability":
        quarter = max(cfg.p + 1, cfg.n // 4)
        init_a = _mle_init(x_clean)
        init_b = _mle_init(x_clean[:quarter])
        for est, k in zip(estimators, task.k_values):
            x = contaminate(x_clean, cfg.epsilon, k) if cfg.epsilon > 0 else x_clean
            try:
                fit1 = est.fit(x, b, init_a)
                fit2 = est.fit(x, b, init_b)
                out[est.label] = kl_divergence(np.zeros(cfg.p), fit1.omega_hat, np.zeros(cfg.p), fit2.omega_hat)
            except DegenerateDataError:
                out[est.label] = None
        return out
    raise ValueError(f"unknown trial task {task.what!r}")


def _is_model_mle(est, cfg):
    # the 'sample' estimator coincides with the model MLE only at the Gaussian
    if est.kind == "mle":
        return True
    return cfg.model.fam_code == 0 and cfg.model.fparams == (0.0, 0.5, 1.0)


def _mle_init(x):
    mu = x.mean(axis=0)
    sigma = np.cov(x, rowvar=False, bias=True)
    sigma = 0.5 * (sigma + sigma.T)
    p = x.shape[1]
    sign, logdet = np.linalg.slogdet(sigma)
    if sign <= 0:
        return mu, np.eye(p)
    return mu, sigma / math.exp(logdet / p)


def _divergences(variant, mu_true, omega_true, model, fit):
    if variant == "shape":
        return kl_divergence(mu_true, omega_true, mu_true, fit.omega_hat)
    if variant == "scatter":
        return kl_divergence(mu_true, model.sigma, mu_true, fit.sigma_hat)
    if variant == "location":
        return kl_divergence(mu_true, model.sigma, fit.mu_hat, model.sigma)
    if variant == "joint":
        return kl_divergence(mu_true, model.sigma, fit.mu_hat, fit.sigma_hat)
    raise ValueError(f"unknown efficiency variant {variant!r}")


def _run_trials(task):
    cfg = task.config
    worker = partial(_one_trial, task)
    if cfg.threads <= 1:
        return [worker(t) for t in range(cfg.trials)]
    with ProcessPoolExecutor(max_workers=cfg.threads) as ex:
        return list(ex.map(worker, range(cfg.trials)))


def _check_failures(label, n_failed, n_total):
    if n_failed > MAX_FAILURE_FRACTION * n_total:
        raise DegenerateDataError(
            f"{label}: {n_failed}/{n_total} trials failed (more than {MAX_FAILURE_FRACTION:.0%})"
        )


def finite_sample_efficiency(config, variant="shape"):
    """Finite-sample relative efficiency vs the model MLE, per estimator.

    Expectations are sample means over the config's trials with common
    random numbers: both estimators see identical data each trial, so an
    estimator measured against itself scores exactly 1.
    """
    task = _TrialTask(config=config, what="efficiency", variant=variant)
    rows = _run_trials(task)
    labels = [e.label for e in resolve_estimators(config)]
    out = {}
    for label in labels:
        num, den, failed = 0.0, 0.0, 0
        for row in rows:
            if row.get("failed") or row.get(label) is None:
                failed += 1
                continue
            num += row["__mle__"]
            den += row[label]
        _check_failures(label, failed, config.trials)
        out[label] = num / den
    return out


def robustness_curve(config):
    """Mean shape divergence per (estimator, contamination value k)."""
    k_values = config.k_grid if config.epsilon > 0 else (0.0,)
    task = _TrialTask(config=config, what="robustness", k_values=tuple(k_values))
    rows = _run_trials(task)
    out = []
    for est in resolve_estimators(config):
        for k in k_values:
            divs = [r[(est.label, k)] for r in rows]
            good = [v[0] for v in divs if v is not None]
            failed = len(divs) - len(good)
            _check_failures(f"{est.label} at k={k}", failed, config.trials)
            out.append(
                {
                    "estimator": est.label,
                    "k": k,
                    "mean_divergence": float(np.sum(good) / len(good)),
                    "failures": failed,
                }
            )
    return out


def worst_case_k(config, rows=None):
    """Per-estimator contamination value maximizing the mean divergence."""
    if config.epsilon == 0:
        return {est.label: 0.0 for est in resolve_estimators(config)}
    rows = rows if rows is not None else robustness_curve(config)
    out = {}
    for row in rows:
        cur = out.get(row["estimator"])
        if cur is None or row["mean_divergence"] > cur[1]:
            out[row["estimator"]] = (row["k"], row["mean_divergence"])
    return {label: k for label, (k, _) in out.items()}


def stability_experiment(config, worst_k=None):
    """Mean divergence between fits started from two different inits.

    Init A is the in-sample MLE shape of all pre-contamination rows; init B
    the MLE of the first quarter.  Contamination (when configured) is set to
    each estimator's worst-case k, found from a robustness curve unless
    supplied.  Means below the solver convergence criterion report as 0.
    """
    estimators = resolve_estimators(config)
    if worst_k is None:
        worst_k = worst_case_k(config)
    k_values = tuple(worst_k[e.label] for e in estimators)
    task = _TrialTask(config=config, what="stability", k_values=k_values)
    rows = _run_trials(task)
    out = []
    for est, k in zip(estimators, k_values):
        vals = [r[est.label] for r in rows]
        good = [v for v in vals if v is not None]
        failed = len(vals) - len(good)
        _check_failures(est.label, failed, config.trials)
        mean = float(np.sum(good) / len(good))
        out.append(
            {
                "estimator": est.label,
                "k": k,
                "mean_divergence": 0.0 if mean < ZERO_REPORT_TOL else mean,
                "failures": failed,
            }
        )
    return out


def iteration_study(config, worst_k=None):
    """Median iteration counts under the same protocol as the robustness
    study; non-converged fits count at their capped iteration number."""
    estimators = resolve_estimators(config)
    if config.epsilon > 0:
        if worst_k is None:
            worst_k = worst_case_k(config)
        k_values = tuple(sorted({worst_k[e.label] for e in estimators}))
    else:
        worst_k = {e.label: 0.0 for e in estimators}
        k_values = (0.0,)
    task = _TrialTask(config=config, what="iterations", k_values=k_values)
    rows = _run_trials(task)
    out = []
    for est in estimators:
        k = worst_k[est.label]
        cells = [r[(est.label, k)] for r in rows]
        good = [c for c in cells if c is not None]
        failed = len(cells) - len(good)
        _check_failures(est.label, failed, config.trials)
        iters = [c[1] for c in good]
        out.append(
            {
                "estimator": est.label,
                "k": k,
                "median_iterations": float(np.median(iters)),
                "non_converged": int(sum(1 for c in good if not c[2])),
                "failures": failed,
            }
        )
    return out
