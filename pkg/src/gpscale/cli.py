"""Command line interface.

Subcommands: sample, predict, estimate, experiment, calibration, verify.
All file output is CSV with #-prefixed metadata lines and 17 significant
digits, so reruns of the same config and seed are byte-identical and
diffable. Exit codes: 0 success, 2 invalid arguments or inputs, 3
numerical failure, 4 verification failure.
"""

import argparse
import os
import sys

import numpy as np

from .analysis import (
    calibration_sweep,
    expectation_report,
    rate_sweep,
)
from .config import (
    ExperimentConfig,
    config_hash,
    kernel_from_spec,
    load_config,
    process_for,
    validate_estimator,
)
from .errors import InvalidArgumentError, NumericallySingularError
from .estimators import (
    sigma_cv_bm,
    sigma_cv_generic,
    sigma_icv_bm,
    sigma_lpo,
    sigma_ml_bm,
    sigma_ml_generic,
    verify_ml_lpo_identity,
)
from .gp import Posterior
from .kernels import BrownianMotion, bm_gram_inverse_tridiagonal, gram
from .partitions import Partition, equispaced, quasi_uniform_random
from .rng import stream_rng
from .sampling import (
    DEFAULT_MAX_CHOLESKY,
    PathSample,
    process_from_spec,
    sample_fbm_circulant,
)

PROCESS_PARAM_FLAGS = ("hurst", "lam", "refinement", "nu", "rho", "terms")


def _fmt(value):
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return format(float(value), ".17g")


def _write_csv(path, meta, names, columns):
    with open(path, "w") as fh:
        for line in meta:
            fh.write(f"# {line}\n")
        fh.write(",".join(names) + "\n")
        for row in zip(*columns):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _read_xy_csv(path):
    xs, fs = [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) < 2:
                raise InvalidArgumentError(f"{path}: expected two columns, got {line!r}")
            try:
                x, f = float(parts[0]), float(parts[1])
            except ValueError:
                continue  # header row
            xs.append(x)
            fs.append(f)
    if not xs:
        raise InvalidArgumentError(f"{path}: no data rows")
    x = np.asarray(xs)
    partition = Partition(x, float(x[-1]))
    return partition, np.asarray(fs)


def _collect_process_params(args):
    return {
        key: getattr(args, key)
        for key in PROCESS_PARAM_FLAGS
        if getattr(args, key, None) is not None
    }


def _apply_overrides(config, args):
    if getattr(args, "out", None) is not None:
        config = config.replace(out_dir=args.out)
    env = os.environ.get("GPSC_SEED")
    if env is not None:
        try:
            config = config.replace(seed=int(env))
        except ValueError:
            raise InvalidArgumentError(f"GPSC_SEED must be an integer, got {env!r}") from None
    return config


def cmd_sample(args):
    params = _collect_process_params(args)
    config = ExperimentConfig(
        process=args.process,
        process_params=params,
        partition_kind=args.partition,
        c_qu=args.c_qu,
        partition_seed=args.partition_seed,
        domain_length=args.domain_length,
        n_grid=(args.n,),
        m=1,
        seed=args.seed,
        sampler=args.sampler,
        max_cholesky=args.max_cholesky,
    )
    process = process_for(config)
    if config.partition_kind == "equispaced":
        partition = equispaced(args.n, args.domain_length)
    else:
        partition = quasi_uniform_random(
            args.n, args.domain_length, args.c_qu, args.partition_seed
        )
    if args.sampler == "circulant":
        if process.kind not in ("bm", "fbm"):
            raise InvalidArgumentError("circulant sampler covers bm and fbm only")
        sample = sample_fbm_circulant(process.alpha, partition, args.seed)
    else:
        sample = process.sample(partition, args.seed, max_n=args.max_cholesky)
    path = os.path.join(args.out, args.output)
    meta = [
        "gpscale sample",
        f"config_hash = {config_hash(config)}",
        f"process = {process.label()}",
        f"partition = {config.partition_kind}",
        f"n = {args.n}",
        f"domain_length = {_fmt(args.domain_length)}",
        f"seed = {args.seed}",
        f"sampler = {args.sampler}",
    ]
    _write_csv(path, meta, ("x", "f"), (partition.points, sample.values))
    print(f"wrote {path}")
    return 0


def cmd_predict(args):
    partition, values = _read_xy_csv(args.data)
    domain = args.domain_length if args.domain_length is not None else partition.domain_length
    if args.kernel == "bm":
        post = Posterior(partition, values, scale=args.scale, domain_length=domain)
    else:
        kernel = kernel_from_spec(args.kernel)
        gm = gram(kernel, partition, jitter=args.jitter)
        post = Posterior(
            partition, values, scale=args.scale, kernel=kernel,
            gram_matrix=gm, domain_length=domain,
        )
    grid = np.linspace(0.0, domain, args.grid_points)
    mean = post.mean(grid)
    sd = np.sqrt(post.variance(grid))
    path = os.path.join(args.out, args.output)
    meta = [
        "gpscale predict",
        f"data = {os.path.basename(args.data)}",
        f"kernel = {args.kernel}",
        f"scale = {_fmt(args.scale)}",
        f"n = {partition.n}",
    ]
    _write_csv(path, meta, ("x", "mean", "sd"), (grid, mean, sd))
    print(f"wrote {path}")
    return 0


def cmd_estimate(args):
    partition, values = _read_xy_csv(args.data)
    sample = PathSample(partition, values)
    names = args.estimator or ["cv"]
    names = [validate_estimator(n.lower()) for n in names]
    bm_model = args.kernel == "bm"
    gm = None
    if not bm_model:
        kernel = kernel_from_spec(args.kernel)
        gm = gram(kernel, partition, jitter=args.jitter)
    for name in names:
        if name == "qv":
            raise InvalidArgumentError("quadratic variation is not an estimator here")
        if bm_model:
            if name == "ml":
                est = sigma_ml_bm(sample)
            elif name == "cv":
                est = sigma_cv_bm(sample)
            elif name == "icv":
                est = sigma_icv_bm(
                    sample, n_boundary=args.n_boundary, interior_norm=args.interior_norm
                )
            else:
                p = int(name.split(":", 1)[1])
                est = sigma_lpo(sample, p, mode=args.lpo_mode)
        elif name == "ml":
            est = sigma_ml_generic(None, partition, values, gram_matrix=gm)
        elif name == "cv":
            est = sigma_cv_generic(None, partition, values, gram_matrix=gm)
        else:
            raise InvalidArgumentError(
                f"estimator {name!r} is only available with the bm kernel"
            )
        line = f"{est.kind} sigma2 = {_fmt(est.value)}"
        if est.decomposition is not None:
            d = est.decomposition
            line += (
                f"  b1 = {_fmt(d.b1)}  interior = {_fmt(d.interior)}  b2 = {_fmt(d.b2)}"
            )
        print(line)
    return 0


def _experiment_meta(config, kind):
    return [
        f"gpscale {kind}",
        f"config_hash = {config_hash(config)}",
        f"process = {process_for(config).label()}",
        f"kernel = {config.kernel}",
        f"partition = {config.partition_kind}",
        f"seed = {config.seed}",
        f"m = {config.m}",
        f"statistic = {config.statistic}",
    ]


def _fit_lines(named_fits):
    lines = []
    for name, fit in named_fits:
        if fit is None:
            lines.append(f"{name}: fit unavailable (needs 4 distinct N after drop)")
        else:
            lines.append(
                f"{name}: exponent = {fit.exponent:.10g}  intercept = {fit.intercept:.10g}"
                f"  r_squared = {fit.r_squared:.10g}  statistic = {fit.statistic}"
                f"  n_used = {','.join(str(v) for v in fit.n_values)}"
            )
    return lines


def cmd_experiment(args):
    config = _apply_overrides(load_config(args.config), args)
    os.makedirs(config.out_dir, exist_ok=True)
    result = rate_sweep(config, jobs=args.jobs)
    meta = _experiment_meta(config, "experiment")

    est_col, n_col, rep_col, val_col = [], [], [], []
    for sweep in result.sweeps:
        for i, n in enumerate(result.n_grid):
            for rep in range(config.m):
                est_col.append(sweep.estimator)
                n_col.append(n)
                rep_col.append(rep)
                val_col.append(sweep.values[i, rep])
    raw_path = os.path.join(config.out_dir, "raw.csv")
    _write_csv(raw_path, meta, ("estimator", "n", "rep", "value"),
               (est_col, n_col, rep_col, val_col))

    est_col, n_col, med_col, mean_col, se_col = [], [], [], [], []
    for sweep in result.sweeps:
        for i, n in enumerate(result.n_grid):
            est_col.append(sweep.estimator)
            n_col.append(n)
            med_col.append(sweep.median[i])
            mean_col.append(sweep.mean[i])
            se_col.append(sweep.se[i])
    summary_path = os.path.join(config.out_dir, "summary.csv")
    _write_csv(summary_path, meta, ("estimator", "n", "median", "mean", "se"),
               (est_col, n_col, med_col, mean_col, se_col))

    fit_path = os.path.join(config.out_dir, "ratefit.txt")
    with open(fit_path, "w") as fh:
        for line in meta:
            fh.write(f"# {line}\n")
        for line in _fit_lines([(s.estimator, s.fit) for s in result.sweeps]):
            fh.write(line + "\n")

    written = [raw_path, summary_path, fit_path]
    if args.emit_plot_data:
        cols = {k: [] for k in ("estimator", "n", "median", "mean", "sd", "lo", "hi")}
        for sweep in result.sweeps:
            sd = sweep.se * np.sqrt(config.m)
            for i, n in enumerate(result.n_grid):
                cols["estimator"].append(sweep.estimator)
                cols["n"].append(n)
                cols["median"].append(sweep.median[i])
                cols["mean"].append(sweep.mean[i])
                cols["sd"].append(sd[i])
                cols["lo"].append(sweep.mean[i] - 2.0 * sd[i])
                cols["hi"].append(sweep.mean[i] + 2.0 * sd[i])
        plot_path = os.path.join(config.out_dir, "plot.csv")
        _write_csv(plot_path, meta, tuple(cols), tuple(cols.values()))
        written.append(plot_path)

    for sweep in result.sweeps:
        top = sweep.median[-1]
        if sweep.fit is None:
            print(f"{sweep.estimator}: median at N={result.n_grid[-1]} is {top:.6g}; no fit")
        else:
            print(
                f"{sweep.estimator}: median at N={result.n_grid[-1]} is {top:.6g}; "
                f"exponent {sweep.fit.exponent:.4f} (r^2 {sweep.fit.r_squared:.4f})"
            )
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_calibration(args):
    config = _apply_overrides(load_config(args.config), args)
    os.makedirs(config.out_dir, exist_ok=True)
    series = calibration_sweep(config)
    meta = _experiment_meta(config, "calibration")

    est_col, n_col, exp_col, sup_col = [], [], [], []
    for s in series:
        for i, n in enumerate(s.n_values):
            est_col.append(s.estimator)
            n_col.append(n)
            exp_col.append(s.reports[i].expected_sigma)
            sup_col.append(s.sups[i])
    cal_path = os.path.join(config.out_dir, "calibration.csv")
    _write_csv(cal_path, meta, ("estimator", "n", "expected_sigma", "sup_ratio"),
               (est_col, n_col, exp_col, sup_col))

    fit_path = os.path.join(config.out_dir, "calibration_fit.txt")
    with open(fit_path, "w") as fh:
        for line in meta:
            fh.write(f"# {line}\n")
        for line in _fit_lines([(s.estimator, s.fit) for s in series]):
            fh.write(line + "\n")

    written = [cal_path, fit_path]
    if args.emit_plot_data:
        est_col, x_col, ratio_col = [], [], []
        for s in series:
            report = s.reports[-1]
            for x, r in zip(report.grid, report.ratio):
                est_col.append(s.estimator)
                x_col.append(x)
                ratio_col.append(r)
        curves_path = os.path.join(config.out_dir, "calibration_curves.csv")
        curve_meta = meta + [f"curves for n = {config.n_grid[-1]}"]
        _write_csv(curves_path, curve_meta, ("estimator", "x", "ratio"),
                   (est_col, x_col, ratio_col))
        written.append(curves_path)

    for s in series:
        if s.fit is None:
            print(f"{s.estimator}: sup at N={s.n_values[-1]} is {s.sups[-1]:.6g}; no fit")
        else:
            print(
                f"{s.estimator}: sup at N={s.n_values[-1]} is {s.sups[-1]:.6g}; "
                f"exponent {s.fit.exponent:.4f} (r^2 {s.fit.r_squared:.4f})"
            )
    for path in written:
        print(f"wrote {path}")
    return 0


def _random_partition(rng, n, lo=0.2, hi=1.8):
    gaps = rng.uniform(lo, hi, n)
    points = np.cumsum(gaps)
    return Partition(points, float(points[-1]))


def _gate_posterior_oracle(seed, cases):
    worst = 0.0
    for c in range(cases):
        rng = stream_rng(seed, 10_000 + c)
        partition = _random_partition(rng, int(rng.integers(1, 33)))
        values = rng.standard_normal(partition.n)
        closed = Posterior(partition, values)
        dense = Posterior(partition, values, kernel=BrownianMotion())
        xs = rng.uniform(0.0, partition.domain_length, 25)
        worst = max(
            worst,
            float(np.max(np.abs(closed.mean(xs) - dense.mean(xs)))),
            float(np.max(np.abs(closed.variance(xs) - dense.variance(xs)))),
        )
    return worst <= 1e-9, f"max deviation {worst:.3g} over {cases} cases"


def _gate_cv_refit(seed, cases):
    worst = 0.0
    for c in range(cases):
        rng = stream_rng(seed, 20_000 + c)
        partition = _random_partition(rng, int(rng.integers(2, 25)))
        values = rng.standard_normal(partition.n)
        total = 0.0
        for k in range(partition.n):
            kept = np.ones(partition.n, dtype=bool)
            kept[k] = False
            sub_points = partition.points[kept]
            sub = Partition(sub_points, float(sub_points[-1]))
            post = Posterior(
                sub, values[kept], kernel=BrownianMotion(),
                domain_length=partition.domain_length,
            )
            x_k = float(partition.points[k])
            total += (values[k] - post.mean(x_k)) ** 2 / post.variance(x_k)
        oracle = total / partition.n
        closed = sigma_cv_bm(PathSample(partition, values)).value
        worst = max(worst, abs(closed - oracle))
    return worst <= 1e-9, f"max deviation {worst:.3g} over {cases} cases"


def _gate_tridiagonal(seed):
    worst = 0.0
    for i, n in enumerate((2, 5, 17, 64)):
        rng = stream_rng(seed, 30_000 + i)
        partition = _random_partition(rng, n, 0.5, 1.5)
        dense = gram(BrownianMotion(), partition).matrix
        inv = bm_gram_inverse_tridiagonal(partition).dense()
        worst = max(worst, float(np.max(np.abs(inv @ dense - np.eye(n)))))
    return worst <= 1e-10, f"max |T K - I| entry {worst:.3g}"


def _gate_lpo(seed, n_max):
    worst_identity = 0.0
    for n in range(2, n_max + 1):
        rng = stream_rng(seed, 40_000 + n)
        partition = _random_partition(rng, n, 0.5, 1.5)
        sample = PathSample(partition, rng.standard_normal(n))
        worst_identity = max(worst_identity, verify_ml_lpo_identity(sample))
    rng = stream_rng(seed, 41_000)
    partition = _random_partition(rng, 7, 0.5, 1.5)
    sample = PathSample(partition, rng.standard_normal(7))
    worst_modes = max(
        abs(
            sigma_lpo(sample, p, mode="explicit").value
            - sigma_lpo(sample, p, mode="bruteforce").value
        )
        for p in range(1, 8)
    )
    ok = worst_identity <= 1e-9 and worst_modes <= 1e-9
    return ok, (
        f"identity residual {worst_identity:.3g} (N <= {n_max}), "
        f"explicit-vs-bruteforce {worst_modes:.3g}"
    )


def _gate_scaling(seed):
    rng = stream_rng(seed, 50_000)
    partition = _random_partition(rng, 9, 0.5, 1.5)
    values = rng.standard_normal(9)
    c = 3.0
    estimators = (
        ("ml", sigma_ml_bm),
        ("cv", sigma_cv_bm),
        ("icv", sigma_icv_bm),
        ("lpo(2)", lambda s: sigma_lpo(s, 2)),
    )
    worst = 0.0
    for _, fn in estimators:
        base = fn(PathSample(partition, values)).value
        scaled = fn(PathSample(partition, c * values)).value
        worst = max(worst, abs(scaled - c * c * base) / (c * c * base))
    return worst <= 1e-12, f"max relative drift {worst:.3g} at c = {c}"


def _gate_expectations(seed, quick):
    if quick:
        combos, n, m = [("fbm", 0.3), ("ifbm", 0.6)], 64, 400
    else:
        combos, n, m = [("fbm", 0.2), ("fbm", 0.7), ("ifbm", 0.25), ("ifbm", 0.75)], 256, 2000
    partition = equispaced(n, 1.0)
    worst = 0.0
    for kind, h in combos:
        process = process_from_spec(kind, hurst=h)
        for name in ("cv", "ml", "icv"):
            report = expectation_report(process, partition, name, m, seed)
            worst = max(worst, abs(report.mc_mean - report.analytic) / report.mc_se)
    return worst <= 3.0, f"max |analytic - MC| = {worst:.2f} standard errors"


def cmd_verify(args):
    quick = args.quick
    seed = args.seed
    gates = [
        ("posterior closed form vs dense solve",
         lambda: _gate_posterior_oracle(seed, 60 if quick else 200)),
        ("cv closed form vs leave-one-out refits",
         lambda: _gate_cv_refit(seed, 25 if quick else 80)),
        ("tridiagonal gram inverse", lambda: _gate_tridiagonal(seed)),
        ("lpo identity and explicit mode", lambda: _gate_lpo(seed, 8 if quick else 10)),
        ("scale equivariance", lambda: _gate_scaling(seed)),
        ("analytic vs monte carlo expectations",
         lambda: _gate_expectations(seed, quick)),
    ]
    failures = 0
    for name, gate in gates:
        ok, detail = gate()
        status = "ok  " if ok else "FAIL"
        print(f"{status} {name}: {detail}")
        if not ok:
            failures += 1
    if failures:
        print(f"{failures} verification gate(s) failed")
        return 4
    print("all verification gates passed")
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="gpscale",
        description="Scale estimation experiments for GP interpolation "
        "with the Brownian motion kernel.",
        epilog="The GPSC_SEED environment variable overrides the config "
        "seed for experiment and calibration runs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw one test-process path and write x,f CSV")
    p.add_argument("--process", default="bm",
                   choices=("bm", "ou", "fbm", "ifbm", "iifbm", "sinestep", "maternmix"))
    p.add_argument("--hurst", type=float, help="Hurst parameter for fbm/ifbm/iifbm")
    p.add_argument("--lam", type=float, help="mean-reversion rate for ou")
    p.add_argument("--refinement", type=int, help="refinement factor for iifbm")
    p.add_argument("--nu", type=float, help="Matern order for maternmix")
    p.add_argument("--rho", type=float, help="Matern length-scale for maternmix")
    p.add_argument("--terms", type=int, help="number of terms for maternmix")
    p.add_argument("--n", type=int, required=True, help="number of partition points")
    p.add_argument("--domain-length", type=float, default=1.0)
    p.add_argument("--partition", default="equispaced",
                   choices=("equispaced", "quasi_uniform"))
    p.add_argument("--c-qu", type=float, default=2.0)
    p.add_argument("--partition-seed", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sampler", default="cholesky", choices=("cholesky", "circulant"))
    p.add_argument("--max-cholesky", type=int, default=DEFAULT_MAX_CHOLESKY)
    p.add_argument("--out", default=".")
    p.add_argument("--output", default="sample.csv")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("predict", help="posterior mean and sd on a grid from x,f data")
    p.add_argument("data", help="CSV with x,f columns")
    p.add_argument("--kernel", default="bm",
                   help="bm, fbm:H, ifbm:H, ou:LAM, matern:NU[:RHO]")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--jitter", type=float, default=0.0)
    p.add_argument("--grid-points", type=int, default=201)
    p.add_argument("--domain-length", type=float, default=None,
                   help="extend predictions past the last data point")
    p.add_argument("--out", default=".")
    p.add_argument("--output", default="predict.csv")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("estimate", help="print scale estimates for x,f data")
    p.add_argument("data", help="CSV with x,f columns")
    p.add_argument("--kernel", default="bm",
                   help="bm, fbm:H, ifbm:H, ou:LAM, matern:NU[:RHO]")
    p.add_argument("--estimator", action="append",
                   help="ml, cv, icv or lpo:p (repeatable; default cv)")
    p.add_argument("--lpo-mode", default="explicit", choices=("explicit", "bruteforce"))
    p.add_argument("--n-boundary", type=int, default=1,
                   help="points dropped from each end for icv")
    p.add_argument("--interior-norm", action="store_true",
                   help="normalize icv by the interior count instead of N")
    p.add_argument("--jitter", type=float, default=0.0)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("experiment", help="Monte-Carlo rate sweep from a TOML config")
    p.add_argument("config", help="TOML config path")
    p.add_argument("--out", default=None, help="override the config out_dir")
    p.add_argument("--jobs", type=int, default=None,
                   help="parallel sweep tasks (default: all cores; results identical)")
    p.add_argument("--emit-plot-data", action="store_true")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("calibration", help="analytic calibration-ratio sweep from a TOML config")
    p.add_argument("config", help="TOML config path")
    p.add_argument("--out", default=None, help="override the config out_dir")
    p.add_argument("--emit-plot-data", action="store_true")
    p.set_defaults(func=cmd_calibration)

    p = sub.add_parser("verify", help="run the correctness gates")
    p.add_argument("--quick", action="store_true", help="smaller fuzz and MC sizes")
    p.add_argument("--seed", type=int, default=20260816)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvalidArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericallySingularError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
