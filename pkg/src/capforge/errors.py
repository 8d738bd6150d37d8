"""Exception types shared across the toolkit.

Every failure mode a caller is expected to handle gets its own class so the
CLI can map error families to distinct exit codes.
"""

from __future__ import annotations


class CapforgeError(Exception):
    """Base class for all toolkit errors."""


class DegenerateRegion(CapforgeError):
    """An oriented box has zero area and cannot be used as a region."""


class ParseError(CapforgeError):
    """A text or JSONL input failed to parse.

    Carries position info so multi-hundred-thousand-line files stay
    debuggable.
    """

    def __init__(self, message: str, line_no: int | None = None, path: str | None = None):
        self.line_no = line_no
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line_no is not None:
            where += f"{line_no}:"
        super().__init__(f"{where} {message}" if where else message)


class SchemaError(CapforgeError):
    """A structurally valid record violates the canonical schema."""


class ConfigError(CapforgeError):
    """Bad or missing configuration (templates, endpoints, pipeline TOML)."""


class EndpointError(CapforgeError):
    """A remote annotator/judge endpoint failed after exhausting retries."""


class EmptyCaption(CapforgeError):
    """The describer returned empty output."""


class JudgeParseError(CapforgeError):
    """The judge response contained no parseable option letter."""


class EmptyDataset(CapforgeError):
    """An operation that requires at least one record got none."""


class EmptyReport(CapforgeError):
    """Aggregation was asked to summarize zero verdicts."""


class ShapeError(CapforgeError):
    """Feature matrices passed to the fusion reference disagree on shape."""


class NumericError(CapforgeError):
    """Non-finite values encountered during a numeric computation."""


class NotFound(CapforgeError):
    """Referenced instance id does not exist."""


class InvalidTransition(CapforgeError):
    """A review decision is not legal from the instance's current state."""
