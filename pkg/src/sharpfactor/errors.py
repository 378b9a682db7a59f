"""Exception hierarchy shared across the package.

Each error carries a short machine-readable ``code`` plus the process exit
status used by the command-line front end (0 success, 2 validation,
3 certification, 4 convergence, 5 size cap).
"""


class SharpfactorError(Exception):
    """Base class for all package errors."""

    code = "error"
    exit_code = 1


class ValidationError(SharpfactorError):
    """Malformed input, config, or argument."""

    code = "validation"
    exit_code = 2


class FeasibilityError(ValidationError):
    """Dimension signature cannot factor every target of the outer shape."""

    code = "infeasible_signature"


class ShapeError(ValidationError):
    """Array shapes incompatible with the chain or target."""

    code = "shape_mismatch"


class CertificationError(SharpfactorError):
    """Input point is not a certified zero-loss minimizer.

    Closed-form eigenvalue expressions are only valid on the minimizer set,
    so callers are refused rather than silently extrapolated.
    """

    code = "not_certified_minimizer"
    exit_code = 3


class ConvergenceError(SharpfactorError):
    """Iterative eigenvalue solve did not meet its tolerance in budget."""

    code = "convergence_failure"
    exit_code = 4

    def __init__(self, message, best_estimate=None, iterations=0):
        super().__init__(message)
        self.best_estimate = best_estimate
        self.iterations = iterations


class SizeError(SharpfactorError):
    """Dense assembly would exceed the configured memory cap."""

    code = "size_cap_exceeded"
    exit_code = 5
