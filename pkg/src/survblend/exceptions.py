"""Exception hierarchy."""


class SurvBlendError(Exception):
    """Base class for package errors."""


class DomainError(SurvBlendError, ValueError):
    """An argument lies outside the domain of a function."""


class ConvergenceError(SurvBlendError, RuntimeError):
    """An optimizer did not reach its tolerance within the iteration budget."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class DegenerateFitError(SurvBlendError, ValueError):
    """A parametric fit is not identifiable from the data given."""


class NoDensityError(SurvBlendError, TypeError):
    """A step-function curve was asked for a density."""


class CensoredRealizationError(SurvBlendError, ValueError):
    """A PIT value was requested for a censored realization."""


class EmptyEnsembleError(SurvBlendError, ValueError):
    """An ensemble has no members."""


class InsufficientHistoryError(SurvBlendError, ValueError):
    """Too few historical years to estimate combination parameters."""


class SchemaError(SurvBlendError, ValueError):
    """Input data does not follow the expected column layout.

    The message is prefixed with ``path:line`` when these are known.
    """

    def __init__(self, message, path=None, line=None):
        where = "" if path is None else (f"{path}:{line}: " if line is not None else f"{path}: ")
        super().__init__(where + message)
        self.path = path
        self.line = line


class MissingStatsError(SurvBlendError, KeyError):
    """Climatology statistics are missing for a requested day."""
