"""Exception hierarchy for sr-granger.

Every failure the library can signal derives from :class:`GrangerError`. The
``exit_code`` attribute is what the CLI exits with: 1 for bad input, 2 for
convergence or achievability failures.
"""

from typing import ClassVar


class GrangerError(Exception):
    """Base class for all sr-granger errors."""

    exit_code: ClassVar[int] = 1


class DimensionMismatch(GrangerError, ValueError):
    """Array shapes are inconsistent or degenerate (n = 0, p = 0)."""


class NotPositiveDefinite(GrangerError, ValueError):
    """A matrix required to be positive-definite is not."""


class InvalidModel(GrangerError, ValueError):
    """A model violates a VarParams invariant; the message names it."""


class NotNull(GrangerError, ValueError):
    """A null-space model was required but some A_k,xy block is non-zero."""


class DegenerateLaw(GrangerError, ValueError):
    """A generalized chi-squared law has no positive weight."""


class RankDeficient(GrangerError):
    """The regressor Gram matrix of a VAR fit is singular."""


class NonConvergent(GrangerError):
    """An iterative solver hit its limit or its stability guard."""

    exit_code = 2


class SingularInnovations(NonConvergent):
    """The reduced innovations covariance became singular during the DARE iteration."""


class SingularPhi(GrangerError):
    """The inverse transfer function could not be inverted at some frequency."""

    exit_code = 2


class SingularSpectrum(GrangerError):
    """A spectral determinant under- or overflowed."""

    exit_code = 2


class Unachievable(GrangerError):
    """A random-model target (gamma, rho, GC) could not be met."""

    exit_code = 2


class AccuracyNotMet(GrangerError):
    """A CDF evaluation could not certify its tolerance."""

    exit_code = 2


class UnstableFit(GrangerError):
    """A fitted or projected model has spectral radius >= 1."""

    exit_code = 2


class ConsistencyError(GrangerError):
    """A value fell below its numerical floor, which signals a solver failure."""

    exit_code = 2
