"""Exception types raised across dppkit."""


class DPPError(Exception):
    """Base class for all dppkit errors."""


class ValidationError(DPPError, ValueError):
    """Input violates a documented invariant."""


class NotSymmetric(ValidationError):
    pass


class NotPSD(ValidationError):
    pass


class DegenerateRank(ValidationError):
    """Every eigenvalue of the dual matrix was discarded by rank truncation."""


class RankMismatch(ValidationError):
    pass


class TooLarge(ValidationError):
    """Ground set too large for exhaustive enumeration."""


class DegenerateVariance(ValidationError):
    """All points coincide, so the 1-means sensitivity formula divides by zero."""


class DegenerateKernel(ValidationError):
    pass


class ZeroCost(ValidationError):
    pass


class ZeroMarginal(ValidationError):
    pass


class IndexOutOfRange(DPPError, IndexError):
    pass


class UnsupportedSubset(DPPError):
    """A sampled subset has exact probability zero under the reference law."""

    def __init__(self, subset, message=None):
        self.subset = tuple(subset)
        super().__init__(message or f"subset {self.subset} has zero probability under the exact law")


class NumericalBreakdown(DPPError, ArithmeticError):
    """Loss of orthogonality or a vanishing pivot during projective sampling."""

    def __init__(self, message, step=None):
        self.step = step
        super().__init__(message)


class AllZero(NumericalBreakdown):
    """Categorical weights sum to a nonpositive value."""
