"""Exception hierarchy shared by all weightlab modules."""


class WeightLabError(Exception):
    """Base class for all weightlab errors."""


class ConfigurationError(WeightLabError):
    """Out-of-range grid or run parameters."""


class BoundsError(WeightLabError):
    """Interval does not fit on the grid."""


class DomainError(WeightLabError):
    """Argument outside the mathematical domain of an operation."""


class InvariantViolation(WeightLabError):
    """A datatype invariant failed (nonpositive sample, bad shape, ...)."""


class PreconditionError(WeightLabError):
    """A documented precondition of an operation does not hold."""


class ConvergenceError(WeightLabError):
    """Iteration hit its cap before reaching the residual target.

    Carries the last iterate's report in ``last_report`` when available.
    """

    def __init__(self, message, last_report=None):
        super().__init__(message)
        self.last_report = last_report


class DepthError(WeightLabError):
    """Truncated series tail exceeds tolerance; retry with larger depth."""


class FormError(WeightLabError):
    """Lattice expression is malformed or outside the supported fragment."""


class RuleError(WeightLabError):
    """Inference rule pattern mismatch or failed side condition."""


class ParseError(WeightLabError):
    """Unparseable weight DSL string or CLI input."""
