"""Shared exception types."""


class DataError(ValueError):
    """Input data or parameters violate a documented contract.

    Raised instead of bare ValueError so callers (and the CLI) can tell
    user-data problems apart from programming errors.
    """
