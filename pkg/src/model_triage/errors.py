"""
Exception types shared across the triage engine.
"""


class TriageError(Exception):
    """Marker base for every error raised deliberately by this package."""


class ShapeError(TriageError, ValueError):
    pass


class StructureError(TriageError, ValueError):
    pass


class FormatError(TriageError, ValueError):
    """A binary or text artifact could not be parsed."""

    def __init__(self, message: str, *, offset: int | None = None, line: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        elif line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)
        self.offset = offset
        self.line = line


class ConfigError(TriageError, ValueError):
    def __init__(self, message: str, *, field: str | None = None):
        if field:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field


class DivergenceError(TriageError, ArithmeticError):
    def __init__(self, epoch: int, label: str = "training"):
        super().__init__(f"{label} diverged: loss became NaN at epoch {epoch}")
        self.epoch = epoch


class ProbeStateError(TriageError, RuntimeError):
    pass
