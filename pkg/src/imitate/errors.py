"""Exception types shared across the package.

The CLI maps :class:`InputError` to exit code 2 and :class:`NumericError`
to exit code 3.
"""


class InputError(ValueError):
    """Invalid arguments, shapes, or file contents."""


class NumericError(ArithmeticError):
    """A computation left the domain where it is well defined."""


class DataFormatError(InputError):
    """A dataset or model file could not be parsed."""
