"""Error types shared across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class NumericallySingularError(RuntimeError):
    """A Gram matrix could not be factorized.

    Signals duplicate or near-duplicate points, a Hurst parameter too close
    to 0 or 1 at large N, or a kernel too smooth for the point count. No
    silent jitter is applied anywhere; callers opt in explicitly where that
    is allowed.
    """
