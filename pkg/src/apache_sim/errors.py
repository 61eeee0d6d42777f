"""Exception hierarchy shared by kernels, models and the simulator."""


class ApacheSimError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameterError(ApacheSimError, ValueError):
    pass


class PreconditionError(ApacheSimError, ValueError):
    """An operand violates a documented precondition (e.g. operand >= modulus)."""


class UnsupportedParameterError(InvalidParameterError):
    pass


class ShapeError(ApacheSimError, ValueError):
    pass


class RangeError(ApacheSimError, ValueError):
    pass


class UnsupportedFunctionError(ApacheSimError, ValueError):
    pass


class KeyKindError(ApacheSimError, ValueError):
    pass


class CapacityError(ApacheSimError, ValueError):
    pass


class ConfigurationError(ApacheSimError, ValueError):
    pass


class RoutingError(ApacheSimError, ValueError):
    pass


class MissingKeyError(ApacheSimError, KeyError):
    pass


class UndefinedRatioError(ApacheSimError, ZeroDivisionError):
    pass


class CycleError(ApacheSimError, ValueError):
    pass


class DanglingReferenceError(ApacheSimError, KeyError):
    pass


class InfeasibleError(ApacheSimError, ValueError):
    pass


class DeadlockError(ApacheSimError, RuntimeError):
    """No runnable event remains while nodes are still pending."""

    def __init__(self, message, pending=()):
        super().__init__(message)
        self.pending = list(pending)


class UndefinedUtilizationError(ApacheSimError, ZeroDivisionError):
    pass


class FormatError(ApacheSimError, ValueError):
    pass


class InvariantViolation(ApacheSimError, AssertionError):
    pass
