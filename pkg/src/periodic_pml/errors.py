"""Exception hierarchy shared by all modules."""
from __future__ import annotations


class PMLError(Exception):
    """Base class for every error raised by this package.

    ``stage`` is set by the pipeline driver to the step that failed.
    """

    stage: str | None = None

    def __str__(self) -> str:
        msg = super().__str__()
        return f"[{self.stage}] {msg}" if self.stage else msg


class ValidationError(PMLError, ValueError):
    """Invalid user input or configuration (CLI exit code 2)."""


class ThresholdViolation(ValidationError):
    """``k**2 == (n + alpha)**2`` for some integer ``n``."""

    def __init__(self, n: int, k: float, alpha: float):
        self.n = n
        self.k = k
        self.alpha = alpha
        super().__init__(
            f"threshold violation: k^2 = (n+alpha)^2 for n={n} (k={k}, alpha={alpha})"
        )


class EmptyGammaInterval(ValidationError):
    pass


class EmptyBetaRange(ValidationError):
    pass


class DomainError(PMLError, ValueError):
    """A complex argument reached a singularity of an analytic profile."""


class DivergentIntegralError(ValidationError):
    """The weighted source integral over the cone does not converge."""


class DegenerateElementError(ValidationError):
    def __init__(self, cell, detj):
        self.cell = cell
        self.detj = detj
        super().__init__(f"non-positive Jacobian {detj:.3e} in cell (j, m) = {cell}")


class EmptySystemError(ValidationError):
    pass


class SizeMismatchError(ValidationError):
    pass


class RegionMismatchError(ValidationError):
    pass


class SolveError(PMLError):
    """Linear solve failure (CLI exit code 3)."""


class SingularSystemError(SolveError):
    pass


class ResidualFailure(SolveError):
    pass


class IllConditionedBasisError(PMLError):
    pass


class InadmissibleBetaError(ValidationError):
    pass


class TailFitMissingError(ValidationError):
    pass


class InsufficientPointsError(PMLError):
    """Fewer than three usable rows for a slope fit."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
