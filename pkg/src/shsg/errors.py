"""Exception hierarchy shared by all modules.

The CLI maps :class:`InputError` to exit code 2 and :class:`NumericalError`
to exit code 3.
"""


class ShsgError(Exception):
    """Base class for package errors."""


class InputError(ShsgError, ValueError):
    """Malformed input or a violated call contract."""


class NumericalError(ShsgError, ArithmeticError):
    """A computation could not produce a valid result."""
