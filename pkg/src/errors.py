"""Exception hierarchy shared by the library and the command line.

Each error carries the process exit code the CLI reports for it.
"""


class TempographError(Exception):
    """Base class for every error raised by tempograph."""

    exit_code = 1


class ConfigError(TempographError):
    """Invalid run configuration or command-line usage."""

    exit_code = 2


class UsageError(ConfigError):
    """An API was called in a way it does not support."""


class ParseError(ConfigError):
    """A dataset line could not be parsed."""

    def __init__(self, line_number: int, reason: str):
        super().__init__(f"line {line_number}: {reason}")
        self.line_number = line_number
        self.reason = reason


class EmptyInputError(ConfigError):
    """The dataset contained no edges."""


class RangeError(ConfigError, IndexError):
    """A node id or timestamp index is outside the graph."""


class ShapeError(ConfigError, ValueError):
    """Tensor or series dimensions do not agree."""


class DomainError(ConfigError, ValueError):
    """A numeric argument is outside its mathematical domain."""


class GenerationError(ConfigError):
    """A generation request cannot be satisfied."""


class MetricError(ConfigError):
    """A graph statistic is undefined on the given snapshot."""


class UndefinedDistributionError(MetricError):
    """A motif histogram has no instances and cannot be normalized."""


class CheckpointError(ConfigError):
    """Base class for checkpoint loading failures."""


class NotACheckpointError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    def __init__(self, tensor: str, expected: tuple, found: tuple):
        super().__init__(f"tensor '{tensor}' has shape {found}, expected {expected}")
        self.tensor = tensor


class NumericError(TempographError):
    """Training produced a non-finite loss."""

    exit_code = 3


class InvariantError(TempographError):
    """An internal invariant was violated."""
