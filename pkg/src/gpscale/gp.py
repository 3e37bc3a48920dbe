"""GP interpolation posteriors.

Two interchangeable backends: a closed-form one for the Brownian motion
kernel (piecewise-linear mean, per-cell variance, both O(1) per query) and
a Gram-solve one for arbitrary kernels. The prior mean is zero and
observations are noiseless throughout.
"""

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InvalidArgumentError
from .kernels import gram

__all__ = [
    "Posterior",
    "bm_posterior",
    "generic_posterior",
    "posterior_mean",
    "posterior_variance",
    "loo_mean_var",
]


class Posterior:
    """Posterior (m_N, k_N) evaluator with a multiplicative scale on k_N.

    The scale rescales the posterior variance only; the mean does not
    depend on it. domain_length may extend past the last data point, in
    which case the mean stays constant at f_N and the variance grows
    linearly out there.
    """

    def __init__(
        self, partition, values, scale=1.0, kernel=None, gram_matrix=None, domain_length=None
    ):
        if scale <= 0:
            raise InvalidArgumentError("scale must be positive")
        if domain_length is None:
            domain_length = partition.domain_length
        if domain_length < partition.points[-1]:
            raise InvalidArgumentError("domain_length must cover the data points")
        self.partition = partition
        self.domain_length = float(domain_length)
        self.values = np.asarray(values, dtype=float)
        self.scale = float(scale)
        self.kernel = kernel
        if kernel is None:
            # Brownian motion closed form: keep the (0, 0) anchor explicit
            self._xs = np.concatenate(([0.0], partition.points))
            self._fs = np.concatenate(([0.0], self.values))
            self._gram = None
            self._weights = None
        else:
            self._gram = gram_matrix if gram_matrix is not None else gram(kernel, partition)
            self._weights = self._gram.solve(self.values)

    @property
    def backend(self):
        return "bm" if self.kernel is None else "generic"

    def _check_domain(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0) or np.any(x > self.domain_length):
            raise InvalidArgumentError("query point outside [0, T]")
        return x

    def mean(self, x):
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(self._check_domain(x))
        if self.kernel is None:
            # piecewise-linear interpolant, constant f_N beyond x_N
            out = np.interp(x, self._xs, self._fs)
        else:
            kx = self.kernel(self.partition.points[:, None], x[None, :])
            out = kx.T @ self._weights
        return float(out[0]) if scalar else out

    def variance(self, x):
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(self._check_domain(x))
        if self.kernel is None:
            pts = self.partition.points
            idx = np.searchsorted(pts, x, side="left")
            out = np.empty_like(x)
            beyond = idx == pts.size
            out[beyond] = x[beyond] - pts[-1]
            inside = ~beyond
            i = idx[inside]
            left = np.where(i > 0, pts[np.maximum(i - 1, 0)], 0.0)
            right = pts[i]
            width = right - left
            out[inside] = (right - x[inside]) * (x[inside] - left) / width
        else:
            kx = self.kernel(self.partition.points[:, None], x[None, :])
            q = solve_triangular(self._gram.chol, kx, lower=True)
            out = self.kernel(x, x) - np.einsum("ij,ij->j", q, q)
        out = np.maximum(out, 0.0)
        out *= self.scale
        return float(out[0]) if scalar else out


def bm_posterior(partition, values, scale=1.0, domain_length=None):
    """Closed-form Brownian motion kernel posterior."""
    return Posterior(partition, values, scale=scale, domain_length=domain_length)


def generic_posterior(kernel, partition, values, scale=1.0, gram_matrix=None, domain_length=None):
    """Gram-solve posterior for an arbitrary kernel (one factorization)."""
    return Posterior(
        partition,
        values,
        scale=scale,
        kernel=kernel,
        gram_matrix=gram_matrix,
        domain_length=domain_length,
    )


def posterior_mean(post, x):
    return post.mean(x)


def posterior_variance(post, x):
    return post.variance(x)


def loo_mean_var(partition, values, n):
    """Leave-one-out prediction at x_n for the Brownian motion kernel.

    Returns (m, k): the posterior mean and variance at x_n of the GP fit
    to the other N-1 points. n is 1-based. For n < N only the two
    neighbours matter (with (x_0, f_0) = (0, 0)); for n = N the result is
    (f_{N-1}, x_N - x_{N-1}).
    """
    n_pts = partition.n
    if n_pts < 2:
        raise InvalidArgumentError("leave-one-out needs at least 2 points")
    if not 1 <= n <= n_pts:
        raise InvalidArgumentError(f"n must be in 1..{n_pts}, got {n}")
    x = np.concatenate(([0.0], partition.points))
    f = np.concatenate(([0.0], np.asarray(values, dtype=float)))
    if n == n_pts:
        return f[n - 1], x[n] - x[n - 1]
    mean = ((x[n] - x[n + 1]) * f[n - 1] + (x[n - 1] - x[n]) * f[n + 1]) / (
        x[n - 1] - x[n + 1]
    )
    var = (x[n] - x[n + 1]) * (x[n] - x[n - 1]) / (x[n - 1] - x[n + 1])
    return mean, var
