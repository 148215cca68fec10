"""Exception hierarchy shared by all modules.

Validation problems (bad inputs) and numerical failures (solver breakdown,
non-convergence) are kept apart so the CLI can map them to exit codes 2 and 3.
"""


class SumruleLabError(Exception):
    """Base class for all package errors."""


class ValidationError(SumruleLabError, ValueError):
    """Input violates a documented precondition."""


class NumericalError(SumruleLabError, RuntimeError):
    """A numerical procedure failed to deliver a trustworthy result."""


class ConvergenceError(NumericalError):
    """Iterative solver did not reach its tolerance."""


class NotOneCutError(NumericalError):
    """The one-cut ansatz produced a density that is negative somewhere."""

    def __init__(self, message, A=None, center=None, halfwidth=None):
        super().__init__(message)
        self.A = A
        self.center = center
        self.halfwidth = halfwidth


class SamplerCollapse(NumericalError):
    """Metropolis acceptance dropped below the collapse threshold."""
