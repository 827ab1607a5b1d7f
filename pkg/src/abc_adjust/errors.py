"""Exception hierarchy. Each class carries the CLI exit status it maps to."""


class AbcError(Exception):
    exit_code = 1


class ConfigError(AbcError, ValueError):
    """Invalid configuration or argument combination."""

    exit_code = 2


class DataError(AbcError, ValueError):
    """Malformed, non-finite or inconsistent input data."""

    exit_code = 3


class NumericalError(AbcError, ArithmeticError):
    """A numerical step could not be carried out (degenerate fit, empty acceptance, ...)."""

    exit_code = 4
