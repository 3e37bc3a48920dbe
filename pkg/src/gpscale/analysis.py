"""Everything that turns estimator values into checkable statements:
quadratic variation, closed-form expectations of the estimators under
fractional process laws, Monte-Carlo sweeps, log-log rate fits, and
credible-interval calibration ratios.

The expectation formulas cover data drawn from FBM (order 0) and
integrated FBM (order 1) evaluated with the Brownian motion model
kernel; Brownian motion itself is the H = 1/2, order-0 case. Everything
else is handled by Monte Carlo.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .config import kernel_from_spec, partition_for, process_for
from .errors import InvalidArgumentError
from .estimators import (
    sigma_cv_bm,
    sigma_cv_generic,
    sigma_icv_bm,
    sigma_lpo,
    sigma_ml_bm,
    sigma_ml_generic,
)
from .kernels import gram
from .sampling import DEFAULT_MAX_CHOLESKY, PathSample, sample_fbm_circulant

__all__ = [
    "RateFit",
    "ExpectationReport",
    "CalibrationReport",
    "CalibrationSeries",
    "EstimatorSweep",
    "RateSweepResult",
    "PointwiseRatio",
    "quadratic_variation",
    "quadratic_variation_parity",
    "expected_sigma_cv_analytic",
    "expected_sigma_ml_analytic",
    "expected_sigma_icv_analytic",
    "expected_pointwise_ratio",
    "expectation_report",
    "rate_fit",
    "rate_sweep",
    "calibration_sweep",
]


class RateFit(NamedTuple):
    exponent: float
    intercept: float
    r_squared: float
    n_values: tuple
    statistic: str


class PointwiseRatio(NamedTuple):
    value: float
    at_node: bool


@dataclass
class ExpectationReport:
    estimator: str
    process_label: str
    n: int
    analytic: Optional[float]
    mc_mean: float
    mc_se: float
    m: int


@dataclass
class CalibrationReport:
    estimator: str
    n: int
    expected_sigma: float
    grid: np.ndarray
    numerator: np.ndarray
    denominator: np.ndarray
    ratio: np.ndarray
    sup: float


@dataclass
class CalibrationSeries:
    estimator: str
    n_values: tuple
    sups: np.ndarray
    fit: Optional[RateFit]
    reports: list


@dataclass
class EstimatorSweep:
    estimator: str
    values: np.ndarray  # (len(n_grid), m), one row per N
    median: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    fit: Optional[RateFit]


@dataclass
class RateSweepResult:
    config: object
    n_grid: tuple
    sweeps: list


def quadratic_variation(sample):
    """Sum of squared consecutive increments, f_0 = 0 included.

    The finite-N sum whose large-N limit is the quadratic variation of
    the path; equals T in the limit for standard Brownian motion.
    """
    d = np.diff(sample.values, prepend=0.0)
    return float(np.sum(d * d))


def quadratic_variation_parity(sample):
    """Squared-increment sums over the even- and odd-indexed points.

    Returns (V0, V1): V0 sums (f_{2n+2} - f_{2n})^2 for 2n+2 <= N, V1
    sums (f_{2n+1} - f_{2n-1})^2, both starting at n = 1. Both approach
    T for Brownian motion and 0 for continuously differentiable paths.
    """
    n = sample.partition.n
    if n < 3:
        raise InvalidArgumentError("parity sums need at least 3 points")
    f = np.concatenate(([0.0], sample.values))
    k0 = (n - 2) // 2
    idx0 = 2 * np.arange(1, k0 + 1)
    v0 = float(np.sum((f[idx0 + 2] - f[idx0]) ** 2))
    k1 = (n - 1) // 2
    idx1 = 2 * np.arange(1, k1 + 1) - 1
    v1 = float(np.sum((f[idx1 + 2] - f[idx1]) ** 2))
    return v0, v1


_ANALYTIC_KINDS = ("bm", "fbm", "ifbm")


def _order_and_hurst(process):
    if getattr(process, "kind", None) not in _ANALYTIC_KINDS:
        raise InvalidArgumentError(
            f"no closed-form expectation for process kind "
            f"{getattr(process, 'kind', None)!r}"
        )
    l, h = process.l, process.alpha
    if not 0.0 < h < 1.0:
        raise InvalidArgumentError(f"Hurst parameter must lie in (0, 1), got {h}")
    return int(l), float(h)


def _pair_terms(l, h, gl, gr):
    # expectation of one standardized interior CV term with gaps (gl, gr);
    # for l = 0 the k = 0 pair doubles as the first boundary term
    if l == 0:
        e = 2.0 * h - 1.0
        return gl**e + gr**e - (gl + gr) ** e
    a = 2.0 * h + 1.0
    return ((gl + gr) ** a - gl**a - gr**a) / (2.0 * (h + 1.0) * a)


def expected_sigma_cv_analytic(process, partition):
    """Exact E[CV estimate] under an FBM (l=0) or integrated-FBM (l=1) law.

    Sums the closed-form expectation of each term of the estimator; no
    Monte Carlo involved. Agreement with MC means is a gating test.
    """
    l, h = _order_and_hurst(process)
    n = partition.n
    if n < 2:
        raise InvalidArgumentError("CV expectation needs at least 2 points")
    g = partition.gaps()
    pair = _pair_terms(l, h, g[:-1], g[1:])
    if l == 0:
        last = g[-1] ** (2.0 * h - 1.0)
    else:
        a = 2.0 * h + 1.0
        x = partition.points
        x_prev = x[-2] if n >= 2 else 0.0
        last = (x[-1] ** a - x_prev**a - g[-1] ** a / (2.0 * (h + 1.0))) / a
    return float((np.sum(pair) + last) / n)


def expected_sigma_ml_analytic(process, partition):
    """Exact E[ML estimate] under an FBM or integrated-FBM law."""
    l, h = _order_and_hurst(process)
    g = partition.gaps()
    if l == 0:
        return float(np.mean(g ** (2.0 * h - 1.0)))
    a = 2.0 * h + 1.0
    x = partition.points
    x_prev = np.concatenate(([0.0], x[:-1]))
    terms = (x**a - x_prev**a - g**a / (2.0 * (h + 1.0))) / a
    return float(np.mean(terms))


def expected_sigma_icv_analytic(process, partition, n_boundary=1, interior_norm=False):
    """Exact expectation of the interior CV sum, same options as the
    estimator itself."""
    l, h = _order_and_hurst(process)
    n = partition.n
    if n < 2 * n_boundary + 1:
        raise InvalidArgumentError(
            f"ICV expectation with n_boundary={n_boundary} needs at least "
            f"{2 * n_boundary + 1} points"
        )
    g = partition.gaps()
    pair = _pair_terms(l, h, g[:-1], g[1:])
    total = float(np.sum(pair[n_boundary : n - n_boundary]))
    denom = (n - 2 * n_boundary) if interior_norm else n
    return total / denom


def _ratio_terms(l, h, dm, dp, width):
    # E[f(x) - m(x)]^2 / k_N(x) inside one cell, unit scale; dm and dp
    # are the distances to the cell edges
    if l == 0:
        e = 2.0 * h - 1.0
        return dm**e + dp**e - width**e
    a = 2.0 * h + 1.0
    return (width**a - dm**a - dp**a) / (2.0 * (h + 1.0) * a)


def expected_pointwise_ratio(process, partition, x):
    """E[f(x) - m_N(x)]^2 / k_N(x) at a single interior location.

    k_N is the unit-scale posterior variance of the Brownian motion
    model, so dividing by an expected scale estimate turns this into the
    calibration ratio. At a data point both numerator and variance
    vanish; 0 is returned by continuity with at_node set.
    """
    l, h = _order_and_hurst(process)
    points = partition.points
    if not 0.0 <= x <= points[-1]:
        raise InvalidArgumentError(f"x={x} outside [0, {points[-1]}]")
    if x == 0.0 or np.any(points == x):
        return PointwiseRatio(0.0, True)
    idx = int(np.searchsorted(points, x))
    lo = 0.0 if idx == 0 else points[idx - 1]
    hi = points[idx]
    value = _ratio_terms(l, h, x - lo, hi - x, hi - lo)
    return PointwiseRatio(float(value), False)


def rate_fit(n_values, y_values, drop_smallest=1, statistic="median"):
    """Least-squares slope of log y against log N.

    The smallest drop_smallest N values are excluded as pre-asymptotic
    transient. Requires at least 4 distinct N values after the drop and
    strictly positive y.
    """
    n_values = np.asarray(n_values, dtype=float)
    y_values = np.asarray(y_values, dtype=float)
    if n_values.shape != y_values.shape or n_values.ndim != 1:
        raise InvalidArgumentError("n_values and y_values must be 1-d and aligned")
    order = np.argsort(n_values)
    n_values, y_values = n_values[order], y_values[order]
    if drop_smallest:
        n_values, y_values = n_values[drop_smallest:], y_values[drop_smallest:]
    if np.unique(n_values).size < 4:
        raise InvalidArgumentError("rate fit needs at least 4 distinct N values")
    if np.any(y_values <= 0.0):
        raise InvalidArgumentError("rate fit needs positive values")
    logn = np.log(n_values)
    logy = np.log(y_values)
    slope, intercept = np.polyfit(logn, logy, 1)
    residual = logy - (slope * logn + intercept)
    ss_tot = float(np.sum((logy - logy.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(residual**2)) / ss_tot
    return RateFit(
        float(slope), float(intercept), r_squared, tuple(int(v) for v in n_values), statistic
    )


def _draw_matrix(process, partition, config, streams):
    if config.sampler == "circulant":
        if process.kind not in ("bm", "fbm"):
            raise InvalidArgumentError("circulant sampler covers bm and fbm only")
        out = np.empty((partition.n, len(streams)))
        for j, s in enumerate(streams):
            out[:, j] = sample_fbm_circulant(
                process.alpha, partition, config.seed, stream=s
            ).values
        return out
    return process.draws(partition, config.seed, streams, max_n=config.max_cholesky)


def _estimate_value(name, sample, gram_matrix, icv_boundary=1):
    if name == "qv":
        return quadratic_variation(sample)
    if gram_matrix is None:
        if name == "ml":
            return sigma_ml_bm(sample).value
        if name == "cv":
            return sigma_cv_bm(sample).value
        if name == "icv":
            return sigma_icv_bm(sample, n_boundary=icv_boundary).value
        p = int(name.split(":", 1)[1])
        return sigma_lpo(sample, p).value
    if name == "ml":
        return sigma_ml_generic(None, sample.partition, sample.values, gram_matrix).value
    if name == "cv":
        return sigma_cv_generic(None, sample.partition, sample.values, gram_matrix).value
    raise InvalidArgumentError(f"estimator {name!r} is only available with the bm kernel")


def _sweep_row(config, n, streams, process):
    partition = partition_for(config, n)
    matrix = _draw_matrix(process, partition, config, streams)
    gram_matrix = None
    if config.kernel != "bm":
        kernel = kernel_from_spec(config.kernel)
        gram_matrix = gram(kernel, partition, jitter=config.jitter)
    row = {}
    for name in config.estimators:
        out = np.empty(matrix.shape[1])
        for j in range(matrix.shape[1]):
            sample = PathSample(partition, matrix[:, j])
            out[j] = _estimate_value(name, sample, gram_matrix, config.icv_boundary)
        row[name] = out
    return row


def rate_sweep(config, jobs=None):
    """Monte-Carlo sweep over the N-grid with per-replication streams.

    Replication r at grid index i always draws from Philox stream
    i * m + r, so results are independent of the jobs setting and of
    which subset of estimators is requested.
    """
    process = process_for(config)
    n_grid = config.n_grid
    m = config.m
    if jobs is None:
        jobs = os.cpu_count() or 1

    def run_one(i):
        streams = range(i * m, (i + 1) * m)
        return _sweep_row(config, n_grid[i], streams, process)

    if jobs > 1 and len(n_grid) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run_one, range(len(n_grid))))
    else:
        rows = [run_one(i) for i in range(len(n_grid))]

    sweeps = []
    for name in config.estimators:
        values = np.vstack([rows[i][name] for i in range(len(n_grid))])
        med = np.median(values, axis=1)
        mean = values.mean(axis=1)
        if m > 1:
            se = values.std(axis=1, ddof=1) / math.sqrt(m)
        else:
            se = np.zeros(len(n_grid))
        curve = med if config.statistic == "median" else mean
        try:
            fit = rate_fit(n_grid, curve, config.drop_smallest, config.statistic)
        except InvalidArgumentError:
            fit = None
        sweeps.append(EstimatorSweep(name, values, med, mean, se, fit))
    return RateSweepResult(config, tuple(n_grid), sweeps)


def expectation_report(process, partition, estimator, m, seed, max_n=DEFAULT_MAX_CHOLESKY):
    """Analytic expectation (when the law admits one) next to an MC mean.

    The Monte-Carlo side evaluates the Brownian-motion-kernel estimator
    on m independent draws of the process.
    """
    closed_forms = {
        "cv": expected_sigma_cv_analytic,
        "ml": expected_sigma_ml_analytic,
        "icv": expected_sigma_icv_analytic,
    }
    if estimator not in closed_forms:
        raise InvalidArgumentError(f"no expectation oracle for estimator {estimator!r}")
    try:
        analytic = closed_forms[estimator](process, partition)
    except InvalidArgumentError:
        analytic = None
    matrix = process.draws(partition, seed, range(m), max_n=max_n)
    values = np.empty(m)
    for j in range(m):
        sample = PathSample(partition, matrix[:, j])
        values[j] = _estimate_value(estimator, sample, None)
    mc_mean = float(values.mean())
    mc_se = float(values.std(ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    return ExpectationReport(
        estimator, process.label(), partition.n, analytic, mc_mean, mc_se, m
    )


def _dyadic_cell_grid(partition, depth):
    # fixed relative offsets j / 2^depth inside every cell, including the
    # implicit (0, x_1) cell; nested under depth refinement so the sup
    # can only grow
    lefts = np.concatenate(([0.0], partition.points[:-1]))
    widths = partition.gaps()
    offsets = np.arange(1, 2**depth, dtype=float) / 2.0**depth
    dm = widths[:, None] * offsets[None, :]
    dp = widths[:, None] - dm
    grid = lefts[:, None] + dm
    return grid.ravel(), dm.ravel(), dp.ravel(), np.repeat(widths, offsets.size)


_EXPECTED_SIGMA = {
    "cv": expected_sigma_cv_analytic,
    "ml": expected_sigma_ml_analytic,
    "icv": expected_sigma_icv_analytic,
}


def calibration_sweep(config):
    """Analytic calibration ratios R(x, N) = E[f - m]^2 / (E sigma^2 k_N).

    For each estimator and each N, evaluates the pointwise ratio on the
    dyadic in-cell grid, divides by the analytic estimator expectation,
    and reports the sup; a log-log fit of sup against N gives the
    calibration exponent.
    """
    process = process_for(config)
    l, h = _order_and_hurst(process)
    series = []
    for name in config.estimators:
        if name not in _EXPECTED_SIGMA:
            raise InvalidArgumentError(
                f"calibration covers cv, ml and icv; got {name!r}"
            )
        reports = []
        sups = np.empty(len(config.n_grid))
        for i, n in enumerate(config.n_grid):
            partition = partition_for(config, n)
            if name == "icv":
                exp_val = expected_sigma_icv_analytic(
                    process, partition, n_boundary=config.icv_boundary
                )
            else:
                exp_val = _EXPECTED_SIGMA[name](process, partition)
            grid, dm, dp, width = _dyadic_cell_grid(partition, config.grid_depth)
            q = _ratio_terms(l, h, dm, dp, width)
            k_n = dm * dp / width
            ratio = q / exp_val
            sup = float(ratio.max())
            reports.append(
                CalibrationReport(name, n, exp_val, grid, q * k_n, exp_val * k_n, ratio, sup)
            )
            sups[i] = sup
        try:
            fit = rate_fit(config.n_grid, sups, config.drop_smallest, "sup")
        except InvalidArgumentError:
            fit = None
        series.append(CalibrationSeries(name, tuple(config.n_grid), sups, fit, reports))
    return series
