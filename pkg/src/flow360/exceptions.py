"""Exception hierarchy shared by the library and the command line tool.

Every error carries a short machine-readable ``kind`` and an ``exit_code``
that the CLI forwards to the shell.
"""


class Flow360Error(Exception):
    kind = "error"
    exit_code = 1

    def __init__(self, message, kind=None):
        super().__init__(message)
        if kind is not None:
            self.kind = kind


class UsageError(Flow360Error, ValueError):
    """Bad arguments: wrong shapes, invalid hyperparameters, bad config."""

    kind = "usage"
    exit_code = 2


class ShapeMismatchError(UsageError):
    kind = "shape-mismatch"


class MalformedInputError(Flow360Error, ValueError):
    """A file could not be parsed."""

    kind = "malformed-input"
    exit_code = 3


class BadMagicError(MalformedInputError):
    kind = "bad-magic"


class TruncatedFileError(MalformedInputError):
    kind = "truncated-file"


class NonFiniteValuesError(MalformedInputError):
    kind = "nonfinite-values"


class UnsupportedFormatError(MalformedInputError):
    kind = "unsupported-format"


class NumericalError(Flow360Error, ArithmeticError):
    kind = "numerical"
    exit_code = 4


class DivergenceError(NumericalError):
    kind = "divergence"
