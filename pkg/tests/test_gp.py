"""Posterior mean/variance: closed form vs dense Gram-solve oracle."""

import numpy as np
import pytest

from gpscale.errors import InvalidArgumentError
from gpscale.gp import Posterior, bm_posterior, generic_posterior, loo_mean_var
from gpscale.kernels import FBM, BrownianMotion
from gpscale.partitions import Partition, equispaced, quasi_uniform_random
from gpscale.rng import stream_rng


def _random_case(rng, n):
    pts = np.sort(rng.uniform(0.05, 1.0, size=n))
    pts = np.unique(pts)
    part = Partition(pts, pts[-1])
    vals = rng.normal(size=part.n)
    return part, vals


def test_mean_midpoint_example():
    part = Partition(np.array([1.0, 2.0]), 2.0)
    post = bm_posterior(part, np.array([1.0, 3.0]))
    assert post.mean(1.5) == 2.0


def test_mean_constant_beyond_last_point():
    part = Partition(np.array([1.0, 2.0]), 2.0)
    post = bm_posterior(part, np.array([1.0, 3.0]), domain_length=4.0)
    assert post.mean(3.0) == 3.0
    assert post.mean(4.0) == 3.0


def test_mean_interpolates_at_nodes():
    rng = stream_rng(21)
    part, vals = _random_case(rng, 9)
    post = bm_posterior(part, vals)
    assert np.max(np.abs(post.mean(part.points) - vals)) <= 1e-14
    # and through the origin
    assert post.mean(0.0) == 0.0


def test_variance_examples():
    part = Partition(np.array([1.0, 2.0]), 2.0)
    post = bm_posterior(part, np.array([1.0, 3.0]))
    assert abs(post.variance(1.5) - 0.25) <= 1e-15
    assert post.variance(1.0) == 0.0
    assert post.variance(2.0) == 0.0
    scaled = bm_posterior(part, np.array([1.0, 3.0]), scale=2.0, domain_length=4.0)
    assert abs(scaled.variance(3.0) - 2.0) <= 1e-15


def test_variance_left_of_first_point():
    # first cell runs from the implicit (0, 0) anchor
    part = Partition(np.array([0.5, 1.0]), 1.0)
    post = bm_posterior(part, np.array([0.2, 0.4]))
    x = 0.25
    assert abs(post.variance(x) - (0.5 - x) * x / 0.5) <= 1e-15


def test_domain_checks():
    part = Partition(np.array([1.0, 2.0]), 2.0)
    post = bm_posterior(part, np.array([1.0, 3.0]))
    with pytest.raises(InvalidArgumentError):
        post.mean(-0.1)
    with pytest.raises(InvalidArgumentError):
        post.variance(2.5)  # T defaults to x_N
    with pytest.raises(InvalidArgumentError):
        bm_posterior(part, np.array([1.0, 3.0]), domain_length=1.5)
    with pytest.raises(InvalidArgumentError):
        bm_posterior(part, np.array([1.0, 3.0]), scale=0.0)


def test_closed_form_equals_gram_solve_fuzz():
    # 500 random cases, N <= 32; the dense solve is the oracle
    rng = stream_rng(77)
    worst = 0.0
    for _ in range(500):
        n = int(rng.integers(1, 33))
        part, vals = _random_case(rng, n)
        xs = rng.uniform(0.0, part.domain_length, size=5)
        closed = bm_posterior(part, vals)
        generic = generic_posterior(BrownianMotion(), part, vals)
        worst = max(worst, np.max(np.abs(closed.mean(xs) - generic.mean(xs))))
        worst = max(worst, np.max(np.abs(closed.variance(xs) - generic.variance(xs))))
    assert worst <= 1e-9


def test_backend_equivalence_fixed_sizes():
    rng = stream_rng(8)
    for n in (1, 2, 7, 33):
        part, vals = _random_case(rng, n)
        xs = np.linspace(0.0, part.domain_length, 100)
        closed = bm_posterior(part, vals)
        generic = generic_posterior(BrownianMotion(), part, vals)
        assert np.max(np.abs(closed.mean(xs) - generic.mean(xs))) <= 1e-9
        assert np.max(np.abs(closed.variance(xs) - generic.variance(xs))) <= 1e-9


def test_generic_backend_interpolates_any_kernel():
    rng = stream_rng(14)
    part, vals = _random_case(rng, 10)
    post = generic_posterior(FBM(0.3), part, vals)
    assert np.max(np.abs(post.mean(part.points) - vals)) <= 1e-9
    assert np.max(np.abs(post.variance(part.points))) <= 1e-9


def test_scale_moves_variance_not_mean():
    rng = stream_rng(30)
    part, vals = _random_case(rng, 12)
    base = bm_posterior(part, vals)
    scaled = bm_posterior(part, vals, scale=3.5)
    xs = np.linspace(0.0, part.domain_length, 40)
    assert np.array_equal(base.mean(xs), scaled.mean(xs))
    assert np.max(np.abs(scaled.variance(xs) - 3.5 * base.variance(xs))) <= 1e-12


def test_loo_closed_form_equal_gaps():
    part = equispaced(8, 1.0)
    vals = stream_rng(2).normal(size=8)
    for n in range(2, 8):  # interior points, 1-indexed
        _, var = loo_mean_var(part, vals, n)
        assert abs(var - 0.125 / 2.0) <= 1e-14  # delta / 2


def test_loo_last_point():
    part = equispaced(6, 1.2)
    vals = stream_rng(4).normal(size=6)
    mean, var = loo_mean_var(part, vals, 6)
    assert mean == vals[-2]
    assert abs(var - 0.2) <= 1e-15


def test_loo_matches_refit_oracle():
    rng = stream_rng(55)
    worst = 0.0
    for _ in range(60):
        n = int(rng.integers(2, 20))
        part, vals = _random_case(rng, n)
        n = part.n
        for leave in range(1, n + 1):
            mean, var = loo_mean_var(part, vals, leave)
            keep = np.delete(np.arange(n), leave - 1)
            x_star = part.points[leave - 1]
            if keep.size:
                kept_pts = part.points[keep]
                sub = Partition(kept_pts, kept_pts[-1])
                refit = generic_posterior(
                    BrownianMotion(), sub, vals[keep], domain_length=part.domain_length
                )
                worst = max(worst, abs(mean - refit.mean(x_star)))
                worst = max(worst, abs(var - refit.variance(x_star)))
    assert worst <= 1e-9


def test_loo_needs_two_points():
    part = Partition(np.array([1.0]), 1.0)
    with pytest.raises(InvalidArgumentError):
        loo_mean_var(part, np.array([1.0]), 1)


def test_posterior_vector_queries():
    part = equispaced(5, 1.0)
    vals = stream_rng(6).normal(size=5)
    post = bm_posterior(part, vals)
    xs = np.array([0.1, 0.37, 0.81])
    m = post.mean(xs)
    v = post.variance(xs)
    assert m.shape == (3,) and v.shape == (3,)
    assert np.all(v >= 0)
