"""Exception hierarchy. Each family maps onto one CLI exit code."""


class IstrateError(Exception):
    exit_code = 1


class ConfigError(IstrateError):
    exit_code = 2


class DataError(IstrateError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(DataError):
    pass


class IntegrityError(DataError):
    pass


class CoverageError(DataError):
    pass


class EmptyResultError(DataError):
    pass


class WindowError(DataError):
    pass


class EligibilityError(DataError):
    pass


class DomainError(ValueError, IstrateError):
    exit_code = 3


class FitError(IstrateError):
    exit_code = 4


class SingularDesignError(FitError):
    def __init__(self, message, columns=()):
        self.columns = tuple(columns)
        super().__init__(message)


class ConvergenceError(FitError):
    def __init__(self, message, trace=None):
        self.trace = trace
        super().__init__(message)


class NumericError(FitError):
    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class UnidentifiablePowerError(FitError):
    pass


class PlanError(DataError):
    pass


class JoinError(DataError):
    def __init__(self, message, missing=()):
        self.missing = list(missing)
        super().__init__(message)


class PlotError(IstrateError):
    exit_code = 5
