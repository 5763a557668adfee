"""Shared exception types for file and numeric failures."""


class FileFormatError(ValueError):
    """A binary or text artifact does not match its declared format."""


class InputError(ValueError):
    """An input file or row cannot be used; message names the offender."""


class NumericError(RuntimeError):
    """A numeric routine produced non-finite values or failed to converge."""
