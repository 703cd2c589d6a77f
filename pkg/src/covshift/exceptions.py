"""Exception hierarchy. Each family maps onto one CLI exit code."""


class CovshiftError(Exception):
    exit_code = 1


class ConfigError(CovshiftError):
    exit_code = 2


class DataError(CovshiftError, ValueError):
    exit_code = 3


class SchemaError(DataError):
    pass


class DegenerateSplitError(DataError):
    pass


class NumericalError(CovshiftError, ArithmeticError):
    exit_code = 4


class InfeasibleProblemError(NumericalError):
    pass
