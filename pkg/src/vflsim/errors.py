"""Exception hierarchy shared by every vflsim module."""


class VflError(Exception):
    """Base class for all simulator errors."""


class DimensionError(VflError, ValueError):
    pass


class NumericError(VflError, ArithmeticError):
    pass


class EmptyInputError(VflError, ValueError):
    pass


class SchemaError(VflError, ValueError):
    pass


class RowError(VflError, ValueError):
    pass


class PartitionError(VflError, ValueError):
    pass


class DuplicateIdError(VflError, ValueError):
    pass


class ProtocolError(VflError, RuntimeError):
    pass


class AlignmentError(ProtocolError):
    pass


class ConfigError(VflError, ValueError):
    """Invalid configuration. ``line`` is the 1-based source line, when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        if line is not None:
            where = f"{path}:{line}" if path else f"line {line}"
            message = f"{where}: {message}"
        super().__init__(message)


class CorruptionError(VflError, ValueError):
    pass


class UndefinedMetricError(VflError, ValueError):
    pass
