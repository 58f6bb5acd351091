"""Exception hierarchy. The CLI maps these onto exit codes."""


class QRXError(Exception):
    exit_code = 3


class ConfigError(QRXError):
    exit_code = 2


class NumericError(QRXError):
    exit_code = 3


class DomainError(QRXError, ValueError):
    """A point or coordinate lies outside the region where an operation is defined."""
    exit_code = 3


class EvaluationError(NumericError):
    pass


class ClassificationError(NumericError):
    pass


class ChartDomainError(NumericError):
    pass


class PrecisionError(NumericError):
    pass


class BranchError(NumericError):
    pass


class GrowthError(NumericError):
    pass


class WindowError(NumericError):
    pass
