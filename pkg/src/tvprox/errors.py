"""Exception hierarchy shared by every module."""


class TVProxError(Exception):
    """Base class for all errors raised by tvprox."""


class InputError(TVProxError, ValueError):
    """Malformed input, e.g. a vector of the wrong dimension."""


class ParameterError(TVProxError, ValueError):
    """A numeric parameter outside its admissible range."""


class DomainError(TVProxError, ValueError):
    """A function was evaluated outside its domain."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class CapabilityError(TVProxError, NotImplementedError):
    """The requested operation is not supported for this family or set."""


class ConvergenceError(TVProxError, RuntimeError):
    """An iterative scheme hit its iteration cap before reaching tolerance."""

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class InfeasibleRestrictionError(TVProxError, ValueError):
    """Tightening a set by the requested margin leaves it empty."""


class DataError(TVProxError, ValueError):
    """Recorded data violates an upstream invariant (e.g. infinite objective)."""


class SolverError(TVProxError, RuntimeError):
    """A solver step failed; ``trace`` holds the records completed so far."""

    def __init__(self, message, k=None, trace=None):
        super().__init__(message)
        self.k = k
        self.trace = trace


class ConfigError(TVProxError, ValueError):
    """Invalid experiment configuration."""
