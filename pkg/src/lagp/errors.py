"""Exception hierarchy shared by every lagp module."""


class LagpError(Exception):
    """Base class for all errors raised by lagp."""


class ParameterError(LagpError, ValueError):
    """An argument is outside its admissible range."""


class DimensionError(LagpError, ValueError):
    """Array shapes do not agree."""


class SingularityError(LagpError, ArithmeticError):
    """Correlation matrix is not numerically positive definite.

    ``pivot`` is the 1-based leading minor at which the factorization broke
    down, as reported by LAPACK.
    """

    def __init__(self, pivot: int, size: int):
        self.pivot = pivot
        self.size = size
        super().__init__(
            f"correlation matrix ({size}x{size}) is not positive definite: "
            f"factorization failed at pivot {pivot}"
        )


class NumericalError(LagpError, ArithmeticError):
    """A quantity that must be finite (or positive) was not."""

    def __init__(self, message: str, theta: float | None = None):
        self.theta = theta
        if theta is not None:
            message = f"{message} (theta={theta!r})"
        super().__init__(message)


class NearSingularExtension(LagpError, ArithmeticError):
    """Adding a point would make the local correlation matrix singular."""

    def __init__(self, minv: float, global_index: int | None = None):
        self.minv = minv
        self.global_index = global_index
        super().__init__(
            f"extension by design row {global_index} is near singular "
            f"(schur complement {minv:.3e})"
        )


class ExhaustedCandidates(LagpError):
    """Every candidate was excluded from the ALC search."""


class PartialDesignError(LagpError):
    """The greedy design loop stopped before reaching the requested size."""

    def __init__(self, reached: int, requested: int, reason: str = ""):
        self.reached = reached
        self.requested = requested
        msg = f"local design stopped at j={reached} of n={requested}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)
