"""Exception hierarchy shared by the library and the CLI."""


class BlockOMPError(Exception):
    """Base class for every error raised by this package."""


class InvalidInput(BlockOMPError, ValueError):
    """Non-finite entries, wrong shapes, or otherwise malformed arrays."""


class RankDeficient(BlockOMPError):
    """A least-squares system does not have full column rank."""


class ZeroColumn(BlockOMPError):
    """Coherence is undefined for a dictionary with a zero column."""


class IndexOutOfRange(BlockOMPError, IndexError):
    pass


class LayoutMismatch(BlockOMPError):
    """A signal, support or matrix disagrees with the block layout."""


class LengthMismatch(BlockOMPError):
    pass


class AllForbidden(BlockOMPError):
    """Every block is excluded from selection."""


class ResidualConverged(BlockOMPError):
    """A pursuit step was requested although the residual is already zero."""


class BudgetExceeded(BlockOMPError):
    """Support enumeration would visit more subsets than allowed."""


class SupportOverlap(BlockOMPError):
    pass


class ZeroSignal(BlockOMPError):
    pass


class InvalidSpec(BlockOMPError):
    pass


class ParseError(BlockOMPError):
    """Malformed configuration document."""

    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class ValidationError(BlockOMPError):
    """A configuration field has an invalid value."""

    def __init__(self, field, reason):
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason


class FormatError(BlockOMPError):
    """Malformed matrix file."""

    def __init__(self, message, line=None, column=None):
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "")
            message = f"{where}: {message}"
        super().__init__(message)
        self.line = line
        self.column = column


class VerificationFailed(BlockOMPError):
    """An asserted verification found a violation."""
