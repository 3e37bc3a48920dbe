"""Covariance functions and Gram matrices.

Every kernel is a callable ``k(x, y)`` accepting scalars or broadcastable
arrays. Kernels are immutable; parameters are validated at construction,
not at evaluation. Gram matrices are factorized once (lower Cholesky) and
shared; a failed factorization raises instead of silently regularizing.
"""

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import gamma, kv

from .errors import InvalidArgumentError, NumericallySingularError

__all__ = [
    "BrownianMotion",
    "FBM",
    "IntegratedFBM",
    "OrnsteinUhlenbeck",
    "Matern",
    "Scaled",
    "GramMatrix",
    "gram",
    "bm_gram_inverse_tridiagonal",
    "TridiagonalMatrix",
]


class BrownianMotion:
    """k(x, x') = min(x, x')."""

    kind = "bm"

    def __call__(self, x, y):
        return np.minimum(x, y)

    def label(self):
        return "bm"


class FBM:
    """Fractional Brownian motion kernel with Hurst parameter H.

    k(x, x') = (|x|^{2H} + |x'|^{2H} - |x - x'|^{2H}) / 2. H = 1/2 is
    evaluated as min(x, x') so it is identical to the Brownian motion
    kernel, not merely close to it.
    """

    kind = "fbm"

    def __init__(self, hurst):
        if not 0 < hurst < 1:
            raise InvalidArgumentError("Hurst parameter must lie in (0, 1)")
        self.hurst = float(hurst)

    def __call__(self, x, y):
        if self.hurst == 0.5:
            return np.minimum(x, y)
        h2 = 2.0 * self.hurst
        x = np.abs(np.asarray(x, dtype=float))
        y = np.abs(np.asarray(y, dtype=float))
        return 0.5 * (x**h2 + y**h2 - np.abs(x - y) ** h2)

    def label(self):
        return f"fbm H={self.hurst:g}"


class IntegratedFBM:
    """Kernel of the once-integrated FBM, f(x) = int_0^x FBM(z) dz.

    Obtained by integrating the FBM kernel over both arguments:

        k(x, x') = [x' x^a + x (x')^a
                    - (x^{a+1} + (x')^{a+1} - |x - x'|^{a+1}) / (a + 1)] / (2a)

    with a = 2H + 1.
    """

    kind = "ifbm"

    def __init__(self, hurst):
        if not 0 < hurst < 1:
            raise InvalidArgumentError("Hurst parameter must lie in (0, 1)")
        self.hurst = float(hurst)

    def __call__(self, x, y):
        a = 2.0 * self.hurst + 1.0
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        cross = y * x**a + x * y**a
        diag = (x ** (a + 1) + y ** (a + 1) - np.abs(x - y) ** (a + 1)) / (a + 1)
        return (cross - diag) / (2.0 * a)

    def label(self):
        return f"ifbm H={self.hurst:g}"


class OrnsteinUhlenbeck:
    """k(x, x') = (e^{-lam |x - x'|} - e^{-lam (x + x')}) / 4.

    Zero at x = 0 or x' = 0, matching the f(0) = 0 convention. The
    stationary variance would be 1/4; the process solves
    df = -lam f dt + sqrt(lam / 2) dB.
    """

    kind = "ou"

    def __init__(self, lam):
        if lam <= 0:
            raise InvalidArgumentError("OU rate lambda must be positive")
        self.lam = float(lam)

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return (np.exp(-self.lam * np.abs(x - y)) - np.exp(-self.lam * (x + y))) / 4.0

    def label(self):
        return f"ou lam={self.lam:g}"


class Matern:
    """Matern kernel of order nu with length-scale rho and unit variance.

    Half-integer orders 1/2, 3/2 and 5/2 use the elementary closed forms;
    any other nu > 0 goes through the modified Bessel function K_nu. Both
    paths agree at the half-integers (tested, not assumed).
    """

    kind = "matern"

    def __init__(self, nu, rho=1.0):
        if nu <= 0:
            raise InvalidArgumentError("Matern order nu must be positive")
        if rho <= 0:
            raise InvalidArgumentError("Matern length-scale rho must be positive")
        self.nu = float(nu)
        self.rho = float(rho)

    def __call__(self, x, y):
        r = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
        s = r / self.rho
        if self.nu == 0.5:
            return np.exp(-s)
        if self.nu == 1.5:
            z = np.sqrt(3.0) * s
            return (1.0 + z) * np.exp(-z)
        if self.nu == 2.5:
            z = np.sqrt(5.0) * s
            return (1.0 + z + z**2 / 3.0) * np.exp(-z)
        return self._bessel(s)

    def _bessel(self, s):
        z = np.sqrt(2.0 * self.nu) * np.asarray(s, dtype=float)
        out = np.ones_like(z)
        nz = z > 0
        zz = z[nz]
        out[nz] = (2.0 ** (1.0 - self.nu) / gamma(self.nu)) * zz**self.nu * kv(self.nu, zz)
        return out if out.ndim else float(out)

    def label(self):
        return f"matern nu={self.nu:g} rho={self.rho:g}"


class Scaled:
    """sigma^2 times an inner kernel."""

    kind = "scaled"

    def __init__(self, scale, inner):
        if scale <= 0:
            raise InvalidArgumentError("scale must be positive")
        self.scale = float(scale)
        self.inner = inner

    def __call__(self, x, y):
        return self.scale * self.inner(x, y)

    def label(self):
        return f"scaled {self.scale:g} * ({self.inner.label()})"


class GramMatrix:
    """Dense SPD kernel matrix with its lower Cholesky factor.

    Immutable after construction. The factor is computed eagerly so that a
    singular matrix fails fast at the call site that built it.
    """

    def __init__(self, matrix, points, kernel=None):
        self.matrix = matrix
        self.points = points
        self.kernel = kernel
        try:
            self.chol = np.linalg.cholesky(matrix)
        except np.linalg.LinAlgError as exc:
            raise NumericallySingularError(
                f"Cholesky factorization failed for N={matrix.shape[0]}"
                + (f", kernel {kernel.label()}" if kernel is not None else "")
            ) from exc
        self._inv_diag = None

    @property
    def n(self):
        return self.matrix.shape[0]

    def solve(self, b):
        """K^{-1} b through the cached factor."""
        return cho_solve((self.chol, True), np.asarray(b, dtype=float))

    def inv_diag(self):
        """Diagonal of K^{-1}, computed once and cached."""
        if self._inv_diag is None:
            inv = cho_solve((self.chol, True), np.eye(self.n))
            self._inv_diag = np.ascontiguousarray(np.diag(inv))
        return self._inv_diag

    def quad_form(self, f):
        """f^T K^{-1} f."""
        f = np.asarray(f, dtype=float)
        return float(f @ self.solve(f))


def gram(kernel, partition, jitter=0.0):
    """Gram matrix of the kernel on the partition points.

    jitter, when nonzero, adds jitter * mean(diag) to the diagonal. It
    exists for ill-conditioned smooth-kernel experiments and must stay 0
    for anything whose value feeds an estimator check.
    """
    x = partition.points
    matrix = np.asarray(kernel(x[:, None], x[None, :]), dtype=float)
    if jitter:
        matrix = matrix + jitter * np.mean(np.diag(matrix)) * np.eye(x.size)
    return GramMatrix(matrix, x, kernel)


class TridiagonalMatrix:
    """Symmetric tridiagonal matrix stored as (diagonal, superdiagonal)."""

    def __init__(self, diag, off):
        self.diag = np.asarray(diag, dtype=float)
        self.off = np.asarray(off, dtype=float)

    def dense(self):
        out = np.diag(self.diag)
        if self.off.size:
            out += np.diag(self.off, 1) + np.diag(self.off, -1)
        return out

    def matvec(self, v):
        v = np.asarray(v, dtype=float)
        out = self.diag * v
        if self.off.size:
            out[:-1] += self.off * v[1:]
            out[1:] += self.off * v[:-1]
        return out


def bm_gram_inverse_tridiagonal(partition):
    """Closed-form inverse of the Brownian motion Gram matrix.

    With x_0 = 0, the inverse is tridiagonal with

        b_i = (x_{i+1} - x_{i-1}) / ((x_{i-1} - x_i)(x_i - x_{i+1})),  i < N
        b_N = -1 / (x_{N-1} - x_N)
        c_i = 1 / (x_i - x_{i+1})

    where c is the off-diagonal. For N = 1 this degenerates to the scalar
    1 / x_1.
    """
    x = partition.points
    n = x.size
    if n == 1:
        return TridiagonalMatrix(np.array([1.0 / x[0]]), np.array([]))
    ext = np.concatenate(([0.0], x))
    b = np.empty(n)
    b[:-1] = (ext[2:] - ext[:-2]) / ((ext[:-2] - ext[1:-1]) * (ext[1:-1] - ext[2:]))
    b[-1] = -1.0 / (x[-2] - x[-1])
    c = 1.0 / (x[:-1] - x[1:])
    return TridiagonalMatrix(b, c)
