"""Scale estimators against brute-force oracles."""

import math

import numpy as np
import pytest

from gpscale.errors import InvalidArgumentError
from gpscale.estimators import (
    sigma_cv_bm,
    sigma_cv_generic,
    sigma_icv_bm,
    sigma_lpo,
    sigma_ml_bm,
    sigma_ml_generic,
    verify_ml_lpo_identity,
)
from gpscale.gp import generic_posterior
from gpscale.kernels import FBM, BrownianMotion, Matern, Scaled, gram
from gpscale.partitions import Partition, equispaced
from gpscale.rng import stream_rng
from gpscale.sampling import PathSample, sample_gp


def _random_sample(rng, n):
    # gaps bounded away from zero keep the dense oracle well conditioned
    gaps = rng.uniform(0.2, 1.8, size=n) / n
    pts = np.cumsum(gaps)
    part = Partition(pts, pts[-1])
    return PathSample(part, rng.normal(size=part.n))


def _bruteforce_loo_cv(sample):
    # N generic GP refits, each leaving one point out; the oracle for the
    # closed-form CV estimator
    part = sample.partition
    vals = sample.values
    n = part.n
    total = 0.0
    for leave in range(n):
        keep = np.delete(np.arange(n), leave)
        kept_pts = part.points[keep]
        sub = Partition(kept_pts, kept_pts[-1])
        post = generic_posterior(
            BrownianMotion(), sub, vals[keep], domain_length=part.domain_length
        )
        x_star = part.points[leave]
        resid = vals[leave] - post.mean(x_star)
        total += resid**2 / post.variance(x_star)
    return total / n


def test_ml_single_point():
    part = Partition(np.array([1.0]), 1.0)
    est = sigma_ml_bm(PathSample(part, np.array([2.0])))
    assert est.value == 4.0
    assert est.kind == "ml" and est.n == 1


def test_ml_equals_quadratic_form():
    rng = stream_rng(100)
    for _ in range(40):
        n = int(rng.integers(1, 65))
        sample = _random_sample(rng, n)
        gm = gram(BrownianMotion(), sample.partition)
        oracle = gm.quad_form(sample.values) / sample.partition.n
        assert abs(sigma_ml_bm(sample).value - oracle) <= 1e-9


def test_cv_equals_bruteforce_refits():
    rng = stream_rng(101)
    worst = 0.0
    for _ in range(60):
        n = int(rng.integers(2, 33))
        sample = _random_sample(rng, n)
        closed = sigma_cv_bm(sample).value
        worst = max(worst, abs(closed - _bruteforce_loo_cv(sample)))
    assert worst <= 1e-9


def test_cv_decomposition_sums_to_value():
    rng = stream_rng(102)
    for _ in range(30):
        sample = _random_sample(rng, int(rng.integers(2, 40)))
        est = sigma_cv_bm(sample)
        d = est.decomposition
        assert abs(est.value - (d.b1 + d.interior + d.b2)) <= 1e-10


def test_cv_linear_function():
    # f = x: interior second differences vanish, B1 = 0, B2 = gap/N
    for n in (4, 16, 100):
        part = equispaced(n, 1.0)
        sample = PathSample(part, part.points.copy())
        est = sigma_cv_bm(sample)
        assert est.decomposition.b1 == 0.0
        assert est.decomposition.interior == 0.0
        assert abs(est.value - 1.0 / n**2) <= 1e-15


def test_cv_needs_two_points():
    part = Partition(np.array([1.0]), 1.0)
    with pytest.raises(InvalidArgumentError):
        sigma_cv_bm(PathSample(part, np.array([1.0])))


def test_icv_is_cv_interior_term():
    rng = stream_rng(103)
    for _ in range(20):
        sample = _random_sample(rng, int(rng.integers(3, 30)))
        icv = sigma_icv_bm(sample)
        cv = sigma_cv_bm(sample)
        assert icv.value == cv.decomposition.interior
        assert icv.kind == "icv"


def test_icv_quadratic_function():
    # f = x^2 on the equispaced grid: each interior term reduces to
    # 2 gap^3, so the estimate is 2 (N-2) gap^3 / N
    n = 32
    part = equispaced(n, 1.0)
    gap = 1.0 / n
    sample = PathSample(part, part.points**2)
    est = sigma_icv_bm(sample)
    assert abs(est.value - 2.0 * (n - 2) * gap**3 / n) <= 1e-15
    # and per-term: the interior sum itself is (N-2) * 2 gap^3
    cv = sigma_cv_bm(sample)
    assert abs(cv.decomposition.interior * n - (n - 2) * 2.0 * gap**3) <= 1e-15


def test_icv_boundary_width():
    rng = stream_rng(104)
    sample = _random_sample(rng, 12)
    # dropping two points per end equals summing the middle terms only
    wide = sigma_icv_bm(sample, n_boundary=2)
    x = np.concatenate(([0.0], sample.partition.points))
    f = np.concatenate(([0.0], sample.values))
    g, d = np.diff(x), np.diff(f)
    total = 0.0
    for k in range(2, 10):  # gap indices 2..9 pair the held-out points 3..10
        num = g[k] * d[k + 1] - g[k + 1] * d[k]
        total += num**2 / ((g[k] + g[k + 1]) * g[k] * g[k + 1])
    assert abs(wide.value - total / 12) <= 1e-12
    # interior_norm switches the denominator to the term count
    alt = sigma_icv_bm(sample, n_boundary=2, interior_norm=True)
    assert abs(alt.value - total / 8) <= 1e-12


def test_icv_size_guards():
    part = equispaced(2, 1.0)
    with pytest.raises(InvalidArgumentError):
        sigma_icv_bm(PathSample(part, np.zeros(2) + 0.5))
    part = equispaced(4, 1.0)
    with pytest.raises(InvalidArgumentError):
        sigma_icv_bm(PathSample(part, np.ones(4)), n_boundary=2)
    with pytest.raises(InvalidArgumentError):
        sigma_icv_bm(PathSample(part, np.ones(4)), n_boundary=0)


def test_lpo_one_is_cv():
    rng = stream_rng(105)
    for _ in range(10):
        sample = _random_sample(rng, int(rng.integers(2, 12)))
        assert sigma_lpo(sample, 1).value == pytest.approx(
            sigma_cv_bm(sample).value, abs=1e-12
        )


def test_lpo_explicit_equals_bruteforce():
    rng = stream_rng(106)
    for n in (2, 5, 8, 10):
        sample = _random_sample(rng, n)
        n = sample.partition.n
        for p in range(1, n + 1):
            a = sigma_lpo(sample, p, mode="explicit").value
            b = sigma_lpo(sample, p, mode="bruteforce").value
            assert abs(a - b) <= 1e-9


def test_lpo_all_out_uses_prior():
    # leaving every point out standardizes each f_n against the prior
    rng = stream_rng(107)
    sample = _random_sample(rng, 6)
    est = sigma_lpo(sample, 6)
    x, f = sample.partition.points, sample.values
    assert abs(est.value - np.mean(f * f / x)) <= 1e-12


def test_ml_lpo_identity():
    rng = stream_rng(108)
    for n in range(2, 11):
        sample = _random_sample(rng, n)
        assert verify_ml_lpo_identity(sample) <= 1e-9


def test_ml_lpo_identity_two_points_tight():
    sample = PathSample(Partition(np.array([1.0, 2.0]), 2.0), np.array([1.0, 1.0]))
    assert verify_ml_lpo_identity(sample) <= 1e-12


def test_ml_lpo_identity_fbm_data():
    # the identity is algebraic in the data vector, so it holds for
    # values drawn from a different process than the model
    part = equispaced(8, 1.0)
    sample = sample_gp(FBM(0.3), part, seed=17)
    assert verify_ml_lpo_identity(sample) <= 1e-9


def test_lpo_guards():
    rng = stream_rng(109)
    sample = _random_sample(rng, 16)
    with pytest.raises(InvalidArgumentError):
        sigma_lpo(sample, 0)
    with pytest.raises(InvalidArgumentError):
        sigma_lpo(sample, 17)
    with pytest.raises(InvalidArgumentError):
        sigma_lpo(sample, 2, mode="bruteforce")  # N = 16 > 14
    with pytest.raises(InvalidArgumentError):
        sigma_lpo(sample, 2, mode="subsets")
    big = _random_sample(stream_rng(110), 30)
    with pytest.raises(InvalidArgumentError):
        sigma_lpo(big, 15)  # C(30, 15) * 15 blows the term budget
    # force=True lifts the bruteforce guard
    val = sigma_lpo(sample, 1, mode="bruteforce", force=True).value
    assert abs(val - sigma_cv_bm(sample).value) <= 1e-9


def test_identity_guard():
    sample = _random_sample(stream_rng(111), 13)
    with pytest.raises(InvalidArgumentError):
        verify_ml_lpo_identity(sample)


def test_scale_equivariance_exact():
    rng = stream_rng(112)
    sample = _random_sample(rng, 10)
    c = 3.0
    scaled = PathSample(sample.partition, c * sample.values)
    pairs = [
        (sigma_ml_bm, {}),
        (sigma_cv_bm, {}),
        (sigma_icv_bm, {}),
        (lambda s: sigma_lpo(s, 2), {}),
        (lambda s: sigma_lpo(s, 10), {}),
    ]
    for fn, _ in pairs:
        base = fn(sample).value
        assert abs(fn(scaled).value - c * c * base) <= 1e-12 * abs(c * c * base)


def test_nonnegativity_fuzz():
    rng = stream_rng(113)
    for _ in range(50):
        sample = _random_sample(rng, int(rng.integers(3, 25)))
        assert sigma_ml_bm(sample).value >= 0
        assert sigma_cv_bm(sample).value >= 0
        assert sigma_icv_bm(sample).value >= 0


def test_generic_matches_closed_forms():
    rng = stream_rng(114)
    for _ in range(25):
        sample = _random_sample(rng, int(rng.integers(2, 30)))
        part, vals = sample.partition, sample.values
        ml = sigma_ml_generic(BrownianMotion(), part, vals)
        cv = sigma_cv_generic(BrownianMotion(), part, vals)
        assert abs(ml.value - sigma_ml_bm(sample).value) <= 1e-9
        assert abs(cv.value - sigma_cv_bm(sample).value) <= 1e-9


def test_generic_cv_matches_explicit_refits():
    # the single-factorization LOO shortcut vs N explicit refits, for a
    # kernel with no closed form
    rng = stream_rng(115)
    part = equispaced(12, 1.0)
    vals = rng.normal(size=12)
    kernel = FBM(0.7)
    shortcut = sigma_cv_generic(kernel, part, vals).value
    total = 0.0
    for leave in range(12):
        keep = np.delete(np.arange(12), leave)
        kept_pts = part.points[keep]
        sub = Partition(kept_pts, kept_pts[-1])
        post = generic_posterior(kernel, sub, vals[keep], domain_length=1.0)
        x_star = part.points[leave]
        resid = vals[leave] - post.mean(x_star)
        total += resid**2 / post.variance(x_star)
    assert abs(shortcut - total / 12) <= 1e-9


def test_matern_five_points_hand_built():
    # direct dense arithmetic with the exponential kernel, no library paths
    pts = np.array([0.2, 0.4, 0.6, 0.8, 1.0])
    part = Partition(pts, 1.0)
    vals = np.array([0.3, -0.1, 0.5, 0.2, -0.4])
    k = np.exp(-np.abs(pts[:, None] - pts[None, :]))
    inv = np.linalg.inv(k)
    ml_direct = vals @ inv @ vals / 5
    r = inv @ vals
    cv_direct = np.mean(r**2 / np.diag(inv))
    assert abs(sigma_ml_generic(Matern(0.5), part, vals).value - ml_direct) <= 1e-12
    assert abs(sigma_cv_generic(Matern(0.5), part, vals).value - cv_direct) <= 1e-12


def test_scaled_kernel_divides_estimate():
    rng = stream_rng(116)
    part = equispaced(9, 1.0)
    vals = rng.normal(size=9)
    base_ml = sigma_ml_generic(BrownianMotion(), part, vals).value
    base_cv = sigma_cv_generic(BrownianMotion(), part, vals).value
    s = 4.0
    k = Scaled(s, BrownianMotion())
    assert sigma_ml_generic(k, part, vals).value == pytest.approx(
        base_ml / s, rel=1e-12
    )
    assert sigma_cv_generic(k, part, vals).value == pytest.approx(
        base_cv / s, rel=1e-12
    )
