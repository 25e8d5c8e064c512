"""Exception types shared across the package."""


class RecordLawError(Exception):
    """Base class for all recordlaw errors."""


class DomainError(RecordLawError, ValueError):
    """Input outside the mathematical domain of a transform or model."""


class ParseError(RecordLawError, ValueError):
    """Malformed input data; carries location context when available."""

    def __init__(self, message, *, row=None, column=None, field=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        if field is not None:
            loc.append(f"field {field!r}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column
        self.field = field


class TransportError(RecordLawError):
    """Network failure that persisted through retries."""

    def __init__(self, message, *, last_status=None):
        if last_status is not None:
            message = f"{message} (last HTTP status {last_status})"
        super().__init__(message)
        self.last_status = last_status


class InsufficientDataError(RecordLawError, ValueError):
    """Not enough rows to fit or predict."""


class EstimationError(RecordLawError):
    """Model estimation failed structurally (degenerate design)."""


class ConfigError(RecordLawError, ValueError):
    """Invalid run configuration."""
