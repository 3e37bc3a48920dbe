"""Deterministic random streams.

All randomness flows through counter-based Philox generators keyed by
(seed, stream). Philox output is platform independent, so a (seed, stream)
pair identifies the same draws everywhere; Monte-Carlo replications use
stream = index of (N, replication) in row-major order.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def stream_rng(seed, stream=0):
    """Generator for the given (seed, stream) pair."""
    key = np.array([int(seed) & _MASK64, int(stream) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
