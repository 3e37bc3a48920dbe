"""Partitions of [0, T]: the point sets every estimator is parameterized by.

A partition is the strictly increasing sequence 0 < x_1 < ... < x_N = T.
The origin x_0 = 0 is implicit and never stored; gap arithmetic always
includes the leading interval (0, x_1].
"""

import numpy as np

from .errors import InvalidArgumentError
from .rng import stream_rng

__all__ = [
    "Partition",
    "equispaced",
    "quasi_uniform_random",
    "quasi_uniformity_ratio",
    "sub_partition_stride2",
    "write_partition_csv",
    "read_partition_csv",
]


class Partition:
    """Ordered sample locations on (0, T] with x_N = T.

    Parameters
    ----------
    points : array_like
        Strictly increasing reals in (0, T] with points[-1] == T.
    domain_length : float
        The right endpoint T of the domain.

    Attributes
    ----------
    points : ndarray
        The locations x_1, ..., x_N (x_0 = 0 is implicit).
    domain_length : float
        T.
    """

    def __init__(self, points, domain_length):
        points = np.asarray(points, dtype=float)
        if points.ndim != 1 or points.size < 1:
            raise InvalidArgumentError("need at least one partition point")
        if domain_length <= 0:
            raise InvalidArgumentError("domain length must be positive")
        if points[0] <= 0:
            raise InvalidArgumentError("partition points must be positive")
        if np.any(np.diff(points) <= 0):
            raise InvalidArgumentError("partition points must be strictly increasing")
        if points[-1] != domain_length:
            raise InvalidArgumentError(
                f"last point {points[-1]} does not equal domain length {domain_length}"
            )
        self.points = points
        self.domain_length = float(domain_length)
        self.points.setflags(write=False)

    @property
    def n(self):
        return self.points.size

    def gaps(self):
        """All N subinterval lengths, including the leading gap x_1 - 0."""
        return np.diff(self.points, prepend=0.0)

    def mesh(self):
        """Length of the longest subinterval."""
        return float(self.gaps().max())

    def __len__(self):
        return self.points.size

    def __repr__(self):
        return f"Partition(n={self.n}, T={self.domain_length})"


def equispaced(n, domain_length=1.0):
    """Uniform grid x_k = k T / n for k = 1..n."""
    if n < 1:
        raise InvalidArgumentError("n must be a positive integer")
    if domain_length <= 0:
        raise InvalidArgumentError("domain length must be positive")
    pts = np.linspace(domain_length / n, domain_length, n)
    pts[-1] = domain_length
    return Partition(pts, domain_length)


def quasi_uniform_random(n, domain_length, c_qu, seed):
    """Random partition with max/min gap ratio at most c_qu.

    Gap weights are drawn uniformly from [1, c_qu] and normalized to sum
    to T, which enforces the ratio bound by construction. c_qu = 1
    reproduces the equispaced grid. Deterministic given the seed.
    """
    if c_qu < 1:
        raise InvalidArgumentError("c_qu must be >= 1")
    if n < 1:
        raise InvalidArgumentError("n must be a positive integer")
    rng = stream_rng(seed, 0)
    weights = rng.uniform(1.0, c_qu, size=n)
    pts = domain_length * np.cumsum(weights) / weights.sum()
    pts[-1] = domain_length
    return Partition(pts, domain_length)


def quasi_uniformity_ratio(partition):
    """Finite-N quasi-uniformity ratio max_n dx_n / min_n dx_n (>= 1)."""
    gaps = partition.gaps()
    return float(gaps.max() / gaps.min())


def sub_partition_stride2(partition, parity):
    """Every second point of the partition, 1-indexed by parity.

    parity="odd" selects x_1, x_3, ...; parity="even" selects x_2, x_4, ....
    The returned partition records its own last point as its endpoint, which
    in general differs from the parent's T. Its quasi-uniformity ratio is at
    most twice the parent's.
    """
    if partition.n < 2:
        raise InvalidArgumentError("stride-2 sub-partition needs at least 2 points")
    if parity == "odd":
        pts = partition.points[0::2]
    elif parity == "even":
        pts = partition.points[1::2]
    else:
        raise InvalidArgumentError(f"parity must be 'even' or 'odd', got {parity!r}")
    return Partition(pts, pts[-1])


def write_partition_csv(path, partition):
    """Write the points as a single CSV column with T in a comment header."""
    with open(path, "w") as fh:
        fh.write(f"# T = {partition.domain_length:.17g}\n")
        fh.write("x\n")
        for x in partition.points:
            fh.write(f"{x:.17g}\n")


def read_partition_csv(path):
    domain_length = None
    xs = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("T") and "=" in body:
                    domain_length = float(body.split("=", 1)[1])
                continue
            if line == "x":
                continue
            xs.append(float(line))
    if domain_length is None:
        domain_length = xs[-1]
    return Partition(np.asarray(xs), domain_length)
