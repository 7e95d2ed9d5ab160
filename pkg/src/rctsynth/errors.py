"""Exception types shared across the package."""


class SynthesisError(Exception):
    """Base class for all rctsynth errors."""


class SchemaViolation(SynthesisError):
    """Data does not conform to its declared column schema."""


class CsvParseError(SynthesisError):
    """A CSV cell could not be parsed; carries row and column context."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)
        self.row = row
        self.column = column


class DegenerateInputError(SynthesisError):
    """Input is too small or too uniform for the operation to be meaningful."""


class DomainError(SynthesisError):
    """A value lies outside the mathematical domain of a transform."""


class ContractViolation(SynthesisError):
    """A caller-side precondition was not met."""


class NumericError(SynthesisError):
    """An iterative numeric routine failed to converge."""


class AdmissibilityError(SynthesisError):
    """Bounded rejection sampling exhausted its retry budget."""

    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"{message} (row {row})"
        super().__init__(message)
        self.row = row


class ConfigError(SynthesisError):
    """A pipeline configuration document is invalid."""
