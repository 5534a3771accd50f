"""Exception types shared across the package."""


class EdrulesError(Exception):
    """Base class for all errors raised by this package."""


class TableError(EdrulesError):
    """Malformed or inconsistent prediction-table data."""
