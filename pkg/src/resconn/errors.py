"""Exception hierarchy shared by every stage.

Each class carries the process exit code the command line maps it to.
"""


class ResconnError(Exception):
    exit_code = 1


class ConfigError(ResconnError):
    exit_code = 2


class DataError(ResconnError, ValueError):
    """Malformed or inconsistent input data (files, cohorts, manifests)."""

    exit_code = 3


class ParseError(DataError):
    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


class FormatError(DataError):
    pass


class CompletenessError(DataError):
    pass


class CompatibilityError(DataError):
    pass


class NumericalError(ResconnError, ArithmeticError):
    exit_code = 4


class DynamicsError(NumericalError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class IndeterminateError(NumericalError):
    pass
