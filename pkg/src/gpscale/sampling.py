"""Exact samplers for the test processes, with deterministic seeding.

The default mechanism is one Cholesky factorization of the process Gram
matrix per (kernel, partition), reused across replications: a draw is
L z with z standard normal from a Philox (seed, stream) pair. Desk-scale
factorizations are capped at N = 4096 by default.

Processes that are not plain GPs are built on top of the exact samplers:
the twice-integrated FBM integrates an exactly-sampled integrated FBM on a
refined grid, the sine-step function only needs one uniform draw, and the
Matern-combination test function interpolates ten random points.
"""

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import InvalidArgumentError, NumericallySingularError
from .kernels import FBM, BrownianMotion, IntegratedFBM, Matern, OrnsteinUhlenbeck, gram
from .partitions import Partition
from .rng import stream_rng

__all__ = [
    "DEFAULT_MAX_CHOLESKY",
    "PathSample",
    "sample_gp",
    "sample_iifbm",
    "sample_sine_step",
    "sample_fbm_circulant",
    "GPProcess",
    "IIFBMProcess",
    "SineStepProcess",
    "MaternMixProcess",
    "process_from_spec",
]

DEFAULT_MAX_CHOLESKY = 4096


class PathSample:
    """Function values at partition points, f(0) = 0 implicit.

    provenance records the process kind, its parameters, the seed and,
    when known, the smoothness labels l[f] and alpha[f].
    """

    def __init__(self, partition, values, provenance=None):
        values = np.asarray(values, dtype=float)
        if values.shape != (partition.n,):
            raise InvalidArgumentError(
                f"values shape {values.shape} does not match partition size {partition.n}"
            )
        self.partition = partition
        self.values = values
        self.values.setflags(write=False)
        self.provenance = dict(provenance or {})

    def __repr__(self):
        kind = self.provenance.get("process", "?")
        return f"PathSample(process={kind}, n={self.partition.n})"


def _check_cap(n, max_n):
    if n > max_n:
        raise InvalidArgumentError(
            f"Cholesky sampling capped at {max_n} points, got {n}; "
            "raise max_n explicitly or use the circulant sampler"
        )


def sample_gp(kernel, partition, seed, max_n=DEFAULT_MAX_CHOLESKY, gram_matrix=None):
    """One exact draw from GP(0, kernel) at the partition points.

    The finite-dimensional law is exactly N(0, K). Passing a prebuilt
    gram_matrix skips the factorization (it must match the partition).
    """
    if gram_matrix is None:
        _check_cap(partition.n, max_n)
        gram_matrix = gram(kernel, partition)
    z = stream_rng(seed, 0).standard_normal(partition.n)
    values = gram_matrix.chol @ z
    return PathSample(
        partition,
        values,
        provenance={"process": kernel.kind, "kernel": kernel.label(), "seed": seed},
    )


def gp_draws(gram_matrix, seed, streams):
    """Matrix of exact GP draws, one column per stream index.

    Column s equals the values sample_gp(..., seed) would produce if its
    draw came from stream s; stream 0 reproduces sample_gp up to the
    last-bit rounding difference between matrix and vector BLAS products.
    """
    n = gram_matrix.n
    z = np.empty((n, len(streams)))
    for j, s in enumerate(streams):
        z[:, j] = stream_rng(seed, s).standard_normal(n)
    return gram_matrix.chol @ z


def _refined_points(partition, refinement):
    # R equal steps inside every gap, including the implicit (0, x_1] gap
    x = np.concatenate(([0.0], partition.points))
    steps = np.arange(1, refinement + 1) / refinement
    refined = (x[:-1, None] + np.diff(x)[:, None] * steps[None, :]).ravel()
    refined[refinement - 1 :: refinement] = partition.points
    return refined


def sample_iifbm(hurst, partition, refinement=16, seed=0, max_n=DEFAULT_MAX_CHOLESKY):
    """Twice-integrated FBM via trapezoid integration of an exact iFBM draw.

    The integrated FBM is sampled exactly (through its kernel) on the
    refinement-fold refined grid, then integrated cumulatively to the
    partition points. The quadrature bias is O(mesh^2 / refinement^2) and
    is documented rather than eliminated; the factorization size is
    N * refinement, and the desk-scale cap applies to it.
    """
    if refinement < 1:
        raise InvalidArgumentError("refinement must be >= 1")
    refined = _refined_points(partition, refinement)
    _check_cap(refined.size, max_n)
    refined_partition = Partition(refined, partition.domain_length)
    inner = sample_gp(IntegratedFBM(hurst), refined_partition, seed, max_n=max_n)
    xs = np.concatenate(([0.0], refined))
    ys = np.concatenate(([0.0], inner.values))
    integral = cumulative_trapezoid(ys, xs)
    values = integral[refinement - 1 :: refinement]
    return PathSample(
        partition,
        values,
        provenance={
            "process": "iifbm",
            "hurst": hurst,
            "refinement": refinement,
            "seed": seed,
            "l": 2,
            "alpha": hurst,
        },
    )


def sample_sine_step(partition, seed, x0=None):
    """f(x) = sin(10 x) + 1{x > x0} with x0 ~ Uniform[0, 1] from the seed.

    Defined on T = 1. The x0 argument is a test hook; when given, no
    random draw is consumed. f(0) = 0 holds since sin 0 = 0 and x0 >= 0.
    """
    if partition.domain_length != 1.0:
        raise InvalidArgumentError("sine-step function is defined on [0, 1]")
    if x0 is None:
        x0 = float(stream_rng(seed, 0).uniform())
    x = partition.points
    values = np.sin(10.0 * x) + (x > x0)
    return PathSample(
        partition,
        values,
        provenance={"process": "sinestep", "x0": x0, "seed": seed},
    )


def _fgn_circulant_eigenvalues(n, hurst):
    k = np.arange(n + 1, dtype=float)
    h2 = 2.0 * hurst
    acov = 0.5 * (np.abs(k + 1) ** h2 - 2.0 * k**h2 + np.abs(k - 1) ** h2)
    circ = np.concatenate([acov, acov[-2:0:-1]])
    eig = np.fft.fft(circ).real
    floor = -1e-12 * eig.max()
    if eig.min() < floor:
        raise NumericallySingularError(
            f"circulant embedding not nonnegative definite for H={hurst}"
        )
    return np.maximum(eig, 0.0)


def sample_fbm_circulant(hurst, partition, seed, stream=0):
    """FBM draw by circulant embedding of the fractional Gaussian noise.

    O(N log N) alternative to Cholesky sampling for equispaced
    partitions; exact in law, validated statistically against the
    Cholesky sampler. Draw order: N+1 normals for the real modes, then
    N-1 pairs for the complex ones. stream plays the same role as in
    gp_draws: one independent replication per stream index.
    """
    if not 0 < hurst < 1:
        raise InvalidArgumentError("Hurst parameter must lie in (0, 1)")
    gaps = partition.gaps()
    step = partition.domain_length / partition.n
    if not np.allclose(gaps, step, rtol=1e-9, atol=0.0):
        raise InvalidArgumentError("circulant sampler requires an equispaced partition")
    n = partition.n
    rng = stream_rng(seed, stream)
    if n == 1:
        values = np.array([step**hurst * rng.standard_normal()])
        return PathSample(
            partition,
            values,
            provenance={"process": "fbm", "hurst": hurst, "seed": seed, "sampler": "circulant"},
        )
    eig = _fgn_circulant_eigenvalues(n, hurst)
    a = rng.standard_normal(n + 1)
    b = rng.standard_normal(n - 1)
    w = np.zeros(2 * n, dtype=complex)
    w[0] = np.sqrt(eig[0] / (2 * n)) * a[0]
    w[n] = np.sqrt(eig[n] / (2 * n)) * a[n]
    amp = np.sqrt(eig[1:n] / (4 * n))
    w[1:n] = amp * (a[1:n] + 1j * b)
    w[n + 1 :] = np.conj(w[1:n][::-1])
    fgn = np.fft.fft(w)[:n].real * step**hurst
    values = np.cumsum(fgn)
    return PathSample(
        partition,
        values,
        provenance={"process": "fbm", "hurst": hurst, "seed": seed, "sampler": "circulant"},
    )


class GPProcess:
    """Any zero-mean GP test process, identified by its kernel."""

    def __init__(self, kernel, l=None, alpha=None):
        self.kernel = kernel
        self.kind = kernel.kind
        self.l = l
        self.alpha = alpha

    def label(self):
        return self.kernel.label()

    def sample(self, partition, seed, max_n=DEFAULT_MAX_CHOLESKY):
        s = sample_gp(self.kernel, partition, seed, max_n=max_n)
        s.provenance.update({"l": self.l, "alpha": self.alpha})
        return s

    def draws(self, partition, seed, streams, max_n=DEFAULT_MAX_CHOLESKY):
        """(N, len(streams)) matrix of replication draws, shared factor."""
        _check_cap(partition.n, max_n)
        return gp_draws(gram(self.kernel, partition), seed, streams)


class IIFBMProcess:
    def __init__(self, hurst, refinement=16):
        self.hurst = float(hurst)
        self.refinement = int(refinement)
        self.kind = "iifbm"
        self.l = 2
        self.alpha = self.hurst

    def label(self):
        return f"iifbm H={self.hurst:g} R={self.refinement}"

    def sample(self, partition, seed, max_n=DEFAULT_MAX_CHOLESKY):
        return sample_iifbm(self.hurst, partition, self.refinement, seed, max_n=max_n)

    def draws(self, partition, seed, streams, max_n=DEFAULT_MAX_CHOLESKY):
        refinement = self.refinement
        refined = _refined_points(partition, refinement)
        _check_cap(refined.size, max_n)
        refined_partition = Partition(refined, partition.domain_length)
        gm = gram(IntegratedFBM(self.hurst), refined_partition)
        inner = gp_draws(gm, seed, streams)
        xs = np.concatenate(([0.0], refined))
        out = np.empty((partition.n, len(streams)))
        for j in range(len(streams)):
            ys = np.concatenate(([0.0], inner[:, j]))
            out[:, j] = cumulative_trapezoid(ys, xs)[refinement - 1 :: refinement]
        return out


class SineStepProcess:
    kind = "sinestep"
    l = 0
    alpha = None

    def label(self):
        return "sinestep"

    def sample(self, partition, seed, max_n=None):
        return sample_sine_step(partition, seed)

    def draws(self, partition, seed, streams, max_n=None):
        out = np.empty((partition.n, len(streams)))
        x = partition.points
        for j, s in enumerate(streams):
            x0 = float(stream_rng(seed, s).uniform())
            out[:, j] = np.sin(10.0 * x) + (x > x0)
        return out


class MaternMixProcess:
    """f = sum_i alpha_i k_nu(., x_i): the Matern posterior mean through
    ten uniform random points (x_i, y_i), one fresh set per replication."""

    def __init__(self, nu, rho=1.0, n_terms=10):
        self.nu = float(nu)
        self.rho = float(rho)
        self.n_terms = int(n_terms)
        self.kernel = Matern(nu, rho)
        self.kind = "maternmix"
        self.l = None
        self.alpha = None

    def label(self):
        return f"maternmix nu={self.nu:g} rho={self.rho:g} m={self.n_terms}"

    def _values(self, x, rng):
        anchors = rng.uniform(size=self.n_terms)
        ys = rng.uniform(size=self.n_terms)
        k_aa = self.kernel(anchors[:, None], anchors[None, :])
        coef = np.linalg.solve(k_aa, ys)
        return self.kernel(x[:, None], anchors[None, :]) @ coef

    def sample(self, partition, seed, max_n=None):
        values = self._values(partition.points, stream_rng(seed, 0))
        return PathSample(
            partition,
            values,
            provenance={
                "process": self.kind,
                "nu": self.nu,
                "rho": self.rho,
                "terms": self.n_terms,
                "seed": seed,
            },
        )

    def draws(self, partition, seed, streams, max_n=None):
        out = np.empty((partition.n, len(streams)))
        for j, s in enumerate(streams):
            out[:, j] = self._values(partition.points, stream_rng(seed, s))
        return out


def process_from_spec(kind, **params):
    """Factory mapping config names to process objects.

    Known kinds: bm, ou (lam), fbm (hurst), ifbm (hurst), iifbm (hurst,
    refinement), sinestep, maternmix (nu, rho, terms).
    """
    kind = kind.lower()
    if kind == "bm":
        return GPProcess(BrownianMotion(), l=0, alpha=0.5)
    if kind == "ou":
        return GPProcess(OrnsteinUhlenbeck(params.get("lam", 0.2)), l=0, alpha=0.5)
    if kind == "fbm":
        h = params["hurst"]
        return GPProcess(FBM(h), l=0, alpha=h)
    if kind == "ifbm":
        h = params["hurst"]
        return GPProcess(IntegratedFBM(h), l=1, alpha=h)
    if kind == "iifbm":
        return IIFBMProcess(params["hurst"], params.get("refinement", 16))
    if kind == "sinestep":
        return SineStepProcess()
    if kind == "maternmix":
        return MaternMixProcess(
            params.get("nu", 0.5), params.get("rho", 1.0), params.get("terms", 10)
        )
    raise InvalidArgumentError(f"unknown process kind {kind!r}")
