"""Exception hierarchy shared by all modules."""


class HfsError(Exception):
    """Base class for every error raised by hfsdiff."""


class DimensionError(HfsError, ValueError):
    pass


class ValidationError(HfsError, ValueError):
    pass


class RangeError(HfsError, ValueError):
    pass


class ParameterError(HfsError, ValueError):
    pass


class SingularityError(HfsError, ArithmeticError):
    pass


class MetricError(HfsError, ValueError):
    pass


class InitializationError(HfsError, ValueError):
    pass


class DivergenceError(HfsError, ArithmeticError):
    """Raised when a sampler iterate becomes non-finite.

    ``step`` is the predictor index at which the failure was seen and
    ``trace`` carries whatever per-step rows were recorded before it.
    """

    def __init__(self, message, step=None, trace=None):
        super().__init__(message)
        self.step = step
        self.trace = trace if trace is not None else []


class TrainingError(HfsError, ArithmeticError):
    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class DegenerateTimeError(RangeError):
    """Kernel variance is zero at the requested time, so the noise scale is undefined."""


class IOFormatError(HfsError, OSError):
    pass
