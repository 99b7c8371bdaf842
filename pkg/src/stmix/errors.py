"""Exception hierarchy.

Every exception carries an ``exit_code`` used by the command line front end:
1 usage, 2 data/input problems, 3 numerical failures.
"""


class StmixError(Exception):
    exit_code = 2


class UsageError(StmixError):
    exit_code = 1


class ParameterError(StmixError, ValueError):
    """Invalid model parameters (distinctness gate, poles, non-positive scales)."""


class DomainError(ParameterError):
    pass


class DataError(StmixError, ValueError):
    pass


class FeatureError(DataError):
    pass


class DiagnosticsError(DataError):
    pass


class PreprocessError(DataError):
    pass


class FetchError(DataError):
    def __init__(self, message, station=None):
        super().__init__(message)
        self.station = station


class MarginTagError(StmixError, TypeError):
    pass


class ModelError(StmixError):
    pass


class NumericalError(StmixError, ArithmeticError):
    exit_code = 3


class FitError(NumericalError):
    """Raised when the optimizer does not converge; ``best`` holds the best iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class SimulationError(NumericalError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class PriorError(NumericalError):
    pass
