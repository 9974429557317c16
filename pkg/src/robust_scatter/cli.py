"""Command-line front end.

Subcommands
-----------
fit        Fit one estimator to a CSV data matrix; writes a FitResult JSON.
tune       Solve for the tuning parameter hitting a target efficiency.
eff-sweep  Efficiency versus tuning parameter, as CSV (parameter, efficiency).
simulate   Run a Monte Carlo experiment from a key=value config file.
portfolio  Minimum-variance allocation backtest from a returns CSV.
influence  Influence-function profile alpha_Sigma(d_z) etc., as CSV.

Global flags: ``--seed`` (integer), ``--out`` (output path or base path),
``--threads`` (worker processes; the ``ROBUST_SCATTER_THREADS`` environment
variable overrides it), ``--config`` (key=value file for subcommands that
take one).

Spec strings
------------
Models:      ``family=<name> p=<dim> <param>=<value>...`` with families
             kotz(N,r,s), gaussian, pearson2(m), pearson7(N,s), t(nu),
             cauchy, genhyp(lam,chi,psi), vg(lam,psi), laplace,
             mvhyp(chi,psi), hum(chi,psi), nig(chi,psi).
Estimators:  ``estimator=sq q=0.9``, ``estimator=rocke gamma=0.8``,
             ``estimator=shr c=6.0``, ``estimator=bisquare``,
             ``estimator=mle``, ``estimator=sample``.

Config keys (simulate): kind=robustness|stability|iterations|efficiency,
model, n, epsilon, k_grid (comma separated), trials, seed, estimator
(repeatable), tune (<target>|match-rocke-max), variant, threads.

Config keys (portfolio): estimator, mu_p, window=<start:end>,
holdout=<start:end>, model (<model spec>|vg-fit), b (max|<value>).

Exit codes: 0 success (fit: converged), 2 fit did not converge, 1 error.
All numeric output uses 17 significant digits; files are written atomically
(temp file + rename) and every run writes a JSON manifest listing its
outputs.
"""

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import time

import numpy as np

from . import __version__, asymptotics, simulation
from .elliptical import GeneratingFunction
from .errors import RobustScatterError, SpecFormatError, TuningError
from .kernels import BisquareKernel, MleKernel, RockeKernel, ShrKernel, SqKernel
from .portfolio import ReturnSeries, backtest, fit_vg_params, robust_plugin
from .simulation import ExperimentConfig
from .solver import b_max_breakdown, fit_mle, fit_mm_shr, fit_s
from .specs import gen_from_spec, parse_estimator_spec, read_config

FMT = ".17g"


def _fmt(x):
    if isinstance(x, float):
        return format(x, FMT)
    return str(x)


def _write_atomic(path, text):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path, payload):
    _write_atomic(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    _write_atomic(path, buf.getvalue())


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items() if k != "func"}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return str(value)


def _write_manifest(out_path, command, config_echo, seed, t0, outputs):
    manifest = {
        "command": command,
        "config": _jsonable(config_echo),
        "seed": seed,
        "version": __version__,
        "wall_clock_sec": time.time() - t0,
        "outputs": [os.path.abspath(p) for p in outputs],
    }
    path = out_path + ".manifest.json"
    _write_json(path, manifest)
    missing = [p for p in outputs if not os.path.exists(p)]
    if missing:
        raise RobustScatterError(f"outputs missing after write: {missing}")
    return path


def load_matrix_csv(path):
    """Numeric matrix from CSV, one sample per row, optional header row."""
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            parsed = []
            for col, cell in enumerate(row, start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    if lineno == 1 or (lineno == 2 and not rows):
                        parsed = None  # header row
                        break
                    raise SpecFormatError(
                        f"{path}: line {lineno}, column {col}: not a number: {cell.strip()!r}"
                    ) from None
            if parsed is not None:
                rows.append(parsed)
    if not rows:
        raise SpecFormatError(f"{path}: no numeric rows found")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise SpecFormatError(f"{path}: inconsistent column counts {sorted(widths)}")
    return np.asarray(rows, dtype=float)


def load_returns_csv(path):
    """ReturnSeries from CSV with a header of asset ids and a date column."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SpecFormatError(f"{path}: empty file") from None
        assets = [h.strip() for h in header[1:]]
        if not assets:
            raise SpecFormatError(f"{path}: expected a date column plus one column per asset")
        dates, data = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(assets) + 1:
                raise SpecFormatError(f"{path}: line {lineno}: expected {len(assets)+1} columns, got {len(row)}")
            dates.append(row[0].strip())
            try:
                data.append([float(c) for c in row[1:]])
            except ValueError as exc:
                raise SpecFormatError(f"{path}: line {lineno}: {exc}") from None
    if not data:
        raise SpecFormatError(f"{path}: no data rows")
    return ReturnSeries(tuple(dates), tuple(assets), np.asarray(data, dtype=float))


def _resolve_b(text, n, p):
    if text is None or text == "max":
        return b_max_breakdown(n, p)
    return float(text)


def _kernel_for(spec, gen, p):
    if spec.kind == "sq":
        if gen is None:
            raise SpecFormatError("estimator=sq needs a --model (its rho is density based)")
        if spec.tuning is None:
            raise SpecFormatError("estimator=sq needs q=<value> (or use the tune subcommand)")
        return SqKernel(gen, spec.tuning)
    if spec.kind == "rocke":
        if spec.tuning is None:
            raise SpecFormatError("estimator=rocke needs gamma=<value>")
        return RockeKernel(spec.tuning)
    if spec.kind == "shr":
        if spec.tuning is None:
            raise SpecFormatError("estimator=shr needs c=<value>")
        return ShrKernel(spec.tuning)
    if spec.kind == "bisquare":
        return BisquareKernel()
    return None


def cmd_fit(args):
    t0 = time.time()
    data = load_matrix_csv(args.data)
    n, p = data.shape
    gen = gen_from_spec(args.model, p=p) if args.model else None
    if gen is not None and gen.p != p:
        raise SpecFormatError(f"model dimension p={gen.p} does not match data columns p={p}")
    spec = parse_estimator_spec(args.estimator)
    b = _resolve_b(args.b, n, p)
    if spec.kind == "mle":
        fit = fit_mle(data, gen or gen_from_spec("family=gaussian", p=p))
    elif spec.kind == "sample":
        fit = simulation._sample_estimator(data)
    elif spec.kind == "shr":
        fit = fit_mm_shr(data, _kernel_for(spec, gen, p), b=b, model=gen)
    else:
        fit = fit_s(data, _kernel_for(spec, gen, p), b=b, model=gen)
    payload = fit.as_dict()
    payload.update({"estimator": spec.label, "n": n, "p": p, "b": b})
    _write_json(args.out, payload)
    _write_manifest(args.out, "fit", vars(args), args.seed or 0, t0, [args.out])
    return 0 if fit.converged else 2


def cmd_tune(args):
    t0 = time.time()
    gen = gen_from_spec(args.model)
    b = 0.5 if args.b in (None, "max") else float(args.b)
    param = asymptotics.tune_to_efficiency(args.estimator_kind, gen, b, args.target, measure=args.measure)
    payload = {
        "estimator_kind": args.estimator_kind,
        "parameter": param,
        "target": args.target,
        "measure": args.measure,
        "b": b,
    }
    _write_json(args.out, payload)
    _write_manifest(args.out, "tune", vars(args), args.seed or 0, t0, [args.out])
    return 0


def _parse_grid(text):
    if ":" in text:
        lo, hi, num = text.split(":")
        return np.linspace(float(lo), float(hi), int(num))
    return np.array([float(v) for v in text.split(",") if v.strip()])


def cmd_eff_sweep(args):
    t0 = time.time()
    gen = gen_from_spec(args.model)
    b = 0.5 if args.b in (None, "max") else float(args.b)
    rows = []
    for param in _parse_grid(args.grid):
        try:
            if args.estimator_kind == "sq":
                kernel = SqKernel(gen, float(param))
            elif args.estimator_kind == "rocke":
                kernel = RockeKernel(float(param))
            elif args.estimator_kind == "shr":
                kernel = ShrKernel(float(param))
            else:
                raise SpecFormatError(f"eff-sweep supports sq, rocke, shr (got {args.estimator_kind!r})")
            if args.measure == "shape":
                eff = asymptotics.efficiency_shape(kernel, gen, b)
            else:
                eff = asymptotics.efficiency_location(kernel, gen, b)
            rows.append((float(param), eff, ""))
        except (TuningError, RobustScatterError) as exc:
            rows.append((float(param), "", f"error: {exc}"))
    _write_csv(args.out, ["parameter", "efficiency", "error"], rows)
    _write_manifest(args.out, "eff-sweep", vars(args), args.seed or 0, t0, [args.out])
    return 0


def cmd_simulate(args):
    t0 = time.time()
    kv = read_config(args.config)
    kind = kv.pop("kind", None)
    if kind is None:
        raise SpecFormatError("config is missing required key 'kind'")
    variant = kv.pop("variant", "shape")
    if args.seed is not None:
        kv["seed"] = args.seed
    if args.threads:
        kv["threads"] = args.threads
    config = ExperimentConfig.from_mapping(kv)
    if kind == "robustness":
        rows = simulation.robustness_curve(config)
        header = ["estimator", "k", "mean_divergence", "failures"]
    elif kind == "stability":
        rows = simulation.stability_experiment(config)
        header = ["estimator", "k", "mean_divergence", "failures"]
    elif kind == "iterations":
        rows = simulation.iteration_study(config)
        header = ["estimator", "k", "median_iterations", "non_converged", "failures"]
    elif kind == "efficiency":
        eff = simulation.finite_sample_efficiency(config, variant=variant)
        rows = [{"estimator": lbl, "efficiency": val} for lbl, val in eff.items()]
        header = ["estimator", "efficiency"]
    else:
        raise SpecFormatError(f"unknown experiment kind {kind!r}")
    csv_path = args.out + ".csv"
    json_path = args.out + ".json"
    _write_csv(csv_path, header, [[row.get(h, "") for h in header] for row in rows])
    summary = {
        "kind": kind,
        "variant": variant,
        "config": {
            "model": f"family={config.model.family.value} p={config.model.p} "
            + " ".join(f"{k}={v:g}" for k, v in config.model.params),
            "n": config.n,
            "epsilon": config.epsilon,
            "k_grid": list(config.k_grid),
            "trials": config.trials,
            "seed": config.seed,
            "estimators": list(config.estimators),
            "tune_target": config.tune_target,
            "tune_match_rocke_max": config.tune_match_rocke_max,
            "threads": config.threads,
        },
        "rows": rows,
        "version": __version__,
    }
    _write_json(json_path, summary)
    _write_manifest(args.out, "simulate", summary["config"], config.seed, t0, [csv_path, json_path])
    return 0


def _parse_span(text, name):
    try:
        lo, hi = text.split(":")
        return int(lo), int(hi)
    except ValueError as exc:
        raise SpecFormatError(f"{name} must look like start:end, got {text!r}") from exc


def cmd_portfolio(args):
    t0 = time.time()
    series = load_returns_csv(args.returns)
    kv = read_config(args.config)
    for key in ("estimator", "mu_p", "window", "holdout"):
        if key not in kv:
            raise SpecFormatError(f"portfolio config is missing required key {key!r}")
    spec = parse_estimator_spec(kv["estimator"])
    mu_p = float(kv["mu_p"])
    window = _parse_span(str(kv["window"]), "window")
    holdout = _parse_span(str(kv["holdout"]), "holdout")
    p = series.p
    n_window = window[1] - window[0]
    b = _resolve_b(str(kv.get("b", "max")), n_window, p)
    model_mode = str(kv.get("model", "vg-fit"))

    vg_params = None
    if model_mode == "vg-fit":
        plug = robust_plugin(series.window(*window).returns, b=b)
        lam, psi = fit_vg_params(series.window(*window), plug.mu_hat, plug.omega_hat)
        gen = GeneratingFunction("vg", p, lam=lam, psi=psi)
        vg_params = {"lam": lam, "psi": psi, "substitute_for": "density-weighted M-estimation"}
    else:
        gen = gen_from_spec(model_mode, p=p)

    if spec.kind in ("sq", "rocke", "shr") and spec.tuning is None:
        param, _ = asymptotics.max_efficiency(spec.kind, gen, b)
        tuning = param
    else:
        tuning = spec.tuning

    def fit_fn(data):
        if spec.kind == "sq":
            return fit_s(data, SqKernel(gen, tuning), b=b, model=gen)
        if spec.kind == "rocke":
            return fit_s(data, RockeKernel(tuning), b=b, model=gen)
        if spec.kind == "bisquare":
            return fit_s(data, BisquareKernel(), b=b, model=gen)
        if spec.kind == "shr":
            return fit_mm_shr(data, ShrKernel(tuning), b=b, model=gen)
        if spec.kind == "mle":
            return fit_mle(data, gen)
        return simulation._sample_estimator(data)

    report = backtest(series, window, holdout, fit_fn, mu_p)
    report.update(
        {
            "estimator": spec.label if tuning is None else f"{spec.kind}({tuning:.6g})",
            "model": model_mode,
            "vg_params": vg_params,
            "b": b,
            "assets": list(series.assets),
        }
    )
    _write_json(args.out, report)
    _write_manifest(args.out, "portfolio", dict(kv), args.seed or 0, t0, [args.out])
    return 0 if report["converged"] else 2


def cmd_influence(args):
    t0 = time.time()
    gen = gen_from_spec(args.model)
    b = 0.5 if args.b in (None, "max") else float(args.b)
    spec = parse_estimator_spec(args.estimator)
    if spec.kind == "mle":
        kernel = MleKernel(gen)
    else:
        kernel = _kernel_for(spec, gen, gen.p)
    if kernel is None:
        raise SpecFormatError(f"influence does not support estimator {spec.kind!r}")
    cst = asymptotics.constants(kernel, gen, b)
    grid = _parse_grid(args.grid) if args.grid else np.linspace(1e-6, 8.0 * gen.p, 200)
    alpha = asymptotics.alpha_sigma(kernel, gen, b, grid)
    rows = [
        (
            float(dz),
            float(a),
            float(kernel.rho(dz / cst.sigma)),
            float(kernel.weight(dz / cst.sigma)),
        )
        for dz, a in zip(grid, alpha)
    ]
    _write_csv(args.out, ["d_z", "alpha_sigma", "rho", "weight"], rows)
    _write_manifest(args.out, "influence", vars(args), args.seed or 0, t0, [args.out])
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="robust-scatter", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, needs_out=True):
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=0, help="worker processes (env ROBUST_SCATTER_THREADS overrides)")
        if needs_out:
            sp.add_argument("--out", required=True, help="output path (or base path for multi-file commands)")

    sp = sub.add_parser("fit", help="fit an estimator to a CSV data matrix")
    sp.add_argument("data")
    sp.add_argument("--estimator", required=True)
    sp.add_argument("--model", default=None)
    sp.add_argument("--b", default="max")
    common(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("tune", help="tune an estimator to a target efficiency")
    sp.add_argument("--estimator-kind", required=True, choices=["sq", "rocke", "shr"])
    sp.add_argument("--model", required=True)
    sp.add_argument("--target", type=float, required=True)
    sp.add_argument("--measure", default="shape", choices=["shape", "location"])
    sp.add_argument("--b", default="max")
    common(sp)
    sp.set_defaults(func=cmd_tune)

    sp = sub.add_parser("eff-sweep", help="efficiency versus tuning parameter")
    sp.add_argument("--estimator-kind", required=True, choices=["sq", "rocke", "shr"])
    sp.add_argument("--model", required=True)
    sp.add_argument("--grid", required=True, help="comma list or lo:hi:n")
    sp.add_argument("--measure", default="shape", choices=["shape", "location"])
    sp.add_argument("--b", default="max")
    common(sp)
    sp.set_defaults(func=cmd_eff_sweep)

    sp = sub.add_parser("simulate", help="run a Monte Carlo experiment config")
    sp.add_argument("--config", required=True)
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("portfolio", help="minimum-variance allocation backtest")
    sp.add_argument("returns")
    sp.add_argument("--config", required=True)
    common(sp)
    sp.set_defaults(func=cmd_portfolio)

    sp = sub.add_parser("influence", help="influence-function profile as CSV")
    sp.add_argument("--estimator", required=True)
    sp.add_argument("--model", required=True)
    sp.add_argument("--grid", default=None)
    sp.add_argument("--b", default="max")
    common(sp)
    sp.set_defaults(func=cmd_influence)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    env_threads = os.environ.get("ROBUST_SCATTER_THREADS")
    if env_threads:
        try:
            args.threads = int(env_threads)
        except ValueError:
            print(f"error: ROBUST_SCATTER_THREADS={env_threads!r} is not an integer", file=sys.stderr)
            return 1
    try:
        return args.func(args)
    except Exception as exc:  # exit-code contract: any failure is exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
