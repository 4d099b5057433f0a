"""Exception hierarchy.

Each class carries the CLI exit code used when it escapes a subcommand:
2 for configuration problems, 3 for bad data, 4 for numerical failures.
"""

from __future__ import annotations


class TripletMetricError(Exception):
    exit_code = 1


class ConfigurationError(TripletMetricError, ValueError):
    exit_code = 2


class InvalidInputError(TripletMetricError, ValueError):
    exit_code = 3


class ParseError(InvalidInputError):
    """Malformed CSV/JSON input; the message names the offending location."""


class InsufficientDataError(InvalidInputError):
    pass


class NumericalError(TripletMetricError, ArithmeticError):
    exit_code = 4


class ConnectivityError(NumericalError):
    def __init__(self, message: str, component=None):
        super().__init__(message)
        self.component = component


class ConvergenceError(NumericalError):
    pass


class RankDeficiencyError(NumericalError):
    pass


class InitializationError(NumericalError):
    pass


class DivergenceError(NumericalError):
    """Raised by the descent loop on a non-finite loss or gradient.

    The partial :class:`~triplet_metric.descent.TrainTrace` recorded up to the
    failure is kept on ``self.trace``.
    """

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace
