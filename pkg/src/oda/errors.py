"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: UsageError -> 1, DataError -> 2,
InternalError (or anything unexpected) -> 3.
"""


class UsageError(ValueError):
    """Caller passed arguments outside an operation's contract."""


class DegenerateInputError(UsageError):
    """Inputs are structurally valid but carry no usable information
    (all-zero weights, all-zero masses)."""


class DataError(ValueError):
    """A file or dataset could not be parsed or is inconsistent."""


class InternalError(RuntimeError):
    """An internal invariant was violated; indicates a bug, not bad input."""
