"""Exception types raised across the package."""


class VidiagError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(VidiagError, ValueError):
    pass


class DomainError(VidiagError, ValueError):
    pass


class InsufficientTailError(VidiagError, ValueError):
    """Fewer than five exceedances available for a Pareto fit."""


class DegenerateTailError(VidiagError, ValueError):
    """All exceedances identical; the tail shape is not identifiable."""


class TooFewDrawsError(VidiagError, ValueError):
    pass


class InvalidDrawsError(VidiagError, ValueError):
    """Non-finite or malformed draw data. ``indices`` holds offending rows."""

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(indices)


class DegenerateWeightsError(VidiagError, ValueError):
    pass


class OptimizerDivergedError(VidiagError, RuntimeError):
    """Stochastic optimisation produced a non-finite ELBO.

    The ELBO trace recorded up to the failure is kept on ``trace``.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class NonFiniteLogJointError(VidiagError, RuntimeError):
    pass


class AdaptationFailedError(VidiagError, RuntimeError):
    pass


class VsbcAbortedError(VidiagError, RuntimeError):
    def __init__(self, message, failures=0, attempted=0):
        super().__init__(message)
        self.failures = failures
        self.attempted = attempted


class InputFormatError(VidiagError, ValueError):
    """Malformed input file. ``line`` is the 1-based line number, if known."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
