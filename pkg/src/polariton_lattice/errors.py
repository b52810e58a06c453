"""Exception hierarchy.  The CLI maps :class:`ConfigError` to exit code 2 and
:class:`NumericalError` (and subclasses) to exit code 3."""


class PolaritonError(Exception):
    pass


class ConfigError(PolaritonError, ValueError):
    """Invalid, missing or unknown configuration input."""

    def __init__(self, message, keys=()):
        super().__init__(message)
        self.keys = tuple(keys)


class NumericalError(PolaritonError, RuntimeError):
    pass


class EigensolverError(NumericalError):
    def __init__(self, message, k=None):
        super().__init__(message)
        self.k = k


class LabellingError(NumericalError):
    pass


class GaugeError(NumericalError):
    pass


class StepSizeError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConstraintError(NumericalError):
    def __init__(self, message, site=None):
        super().__init__(message)
        self.site = site


class UndefinedCorrelationError(NumericalError):
    pass


class UnsupportedInteractionError(ConfigError):
    pass


class DimensionError(PolaritonError, ValueError):
    pass


class NumericalWarning(UserWarning):
    pass


class ValidityWarning(UserWarning):
    """A modelling assumption (blockade ordering, single-band neglect) is violated."""
