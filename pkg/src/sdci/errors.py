"""Exception hierarchy shared by the library and the command line."""


class SdciError(Exception):
    """Base class for all errors raised by :mod:`sdci`."""

    exit_code = 1


class DomainError(SdciError, ValueError):
    """An argument lies outside the domain of the operation."""

    exit_code = 4


class ConfigError(SdciError, ValueError):
    """Invalid procedure, family or simulation configuration."""

    exit_code = 2


class InputError(SdciError, ValueError):
    """Malformed or inconsistent input data."""

    exit_code = 3


class ParseError(InputError):
    """A data file could not be parsed.

    Parameters
    ----------
    message : str
        What went wrong.
    line : int, optional
        1-based line number in the offending file.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericError(SdciError, ArithmeticError):
    """A numerical routine failed (for example a root was not bracketed)."""

    exit_code = 4


class DegenerateTableError(InputError):
    """A contingency table has a zero cell or an empty margin."""
