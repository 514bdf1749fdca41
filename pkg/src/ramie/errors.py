"""Exception hierarchy shared by every ramie module."""

from __future__ import annotations


class RamieError(Exception):
    """Base class for all errors raised by this package."""


def _locate(message: str, path: str | None, line: int | None, field: str | None) -> str:
    where = [str(path)] if path is not None else []
    if line is not None:
        where.append(f"line {line}")
    if field is not None:
        where.append(f"field {field!r}")
    return f"{', '.join(where)}: {message}" if where else message


class LabelError(RamieError, ValueError):
    """A label could not be mapped into its closed vocabulary."""

    def __init__(self, message: str, *, line: int | None = None, field: str | None = None, path: str | None = None):
        self.line = line
        self.field = field
        self.path = path
        self.detail = message
        super().__init__(_locate(message, path, line, None))


class UnknownLabel(LabelError):
    pass


class SchemaError(RamieError, ValueError):
    """A corpus line is structurally invalid."""

    def __init__(self, message: str, *, line: int | None = None, field: str | None = None, path: str | None = None):
        self.line = line
        self.field = field
        self.path = path
        self.detail = message
        super().__init__(_locate(message, path, line, field))


class CorpusIOError(RamieError, OSError):
    pass


class TaskMismatch(RamieError, ValueError):
    pass


class DuplicateTask(RamieError, ValueError):
    pass


class MissingTask(RamieError, ValueError):
    pass


class AlignmentError(RamieError, ValueError):
    pass


class BuildError(RamieError, ValueError):
    pass


class EmptyCandidateSet(RamieError, LookupError):
    pass


class StaleIndex(RamieError):
    pass


class DimMismatch(RamieError, ValueError):
    pass


class RemoteError(RamieError):
    """Embedding service failure after retries."""


class EndpointError(RamieError):
    """Chat-completion endpoint failure after retries."""


class ConfigError(RamieError):
    pass


class PipelineError(RamieError):
    pass
