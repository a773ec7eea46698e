"""Exception types raised across the toolkit."""


class RobustMcError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatchError(RobustMcError):
    """Operands do not share the required shape."""


class DataValidationError(RobustMcError):
    """Input data violates a documented precondition (non-finite entries,
    empty observation set, zero-variance image, infeasible parameters...)."""


class SvdError(RobustMcError):
    """The SVD backend failed to converge."""
