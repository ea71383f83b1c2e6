"""Exception hierarchy. Every error is a ``ValueError`` so callers catching input errors keep working."""
from typing import Optional


class HalographError(ValueError):
    """Base class for all package errors."""


class StlParseError(HalographError):
    """Raised when an STL file cannot be parsed.

    Args:
        message: Human readable description.
        offset: Byte offset of the failure for binary files.
        line: 1-based line number of the failure for ASCII files.
    """

    def __init__(self, message: str, offset: Optional[int] = None, line: Optional[int] = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        if line is not None:
            message = f"{message} (at line {line})"
        super().__init__(message)
        self.offset = offset
        self.line = line


class SchemaError(HalographError):
    """Feature or config schema does not match what the consumer expects."""


class ChecksumError(HalographError):
    """An upstream bundle changed after a downstream bundle was derived from it."""


class ConfigError(HalographError):
    """The pipeline configuration is invalid."""


class HaloDepthError(HalographError):
    """Partitioned execution was requested with a halo shallower than the message passing depth."""


class NonFiniteError(HalographError):
    """A loss or gradient became NaN or infinite.

    Args:
        message: Human readable description.
        partition_id: Partition on which the value was produced, if known.
    """

    def __init__(self, message: str, partition_id: Optional[int] = None):
        if partition_id is not None:
            message = f"{message} (partition {partition_id})"
        super().__init__(message)
        self.partition_id = partition_id
