"""Exception hierarchy shared by every module.

The CLI maps these onto stable exit codes, so keep the split between
input problems (bad files, bad values) and shape/validation problems.
"""


class SSAError(Exception):
    """Base class for all library errors."""


class InputError(SSAError, ValueError):
    """Malformed or out-of-range input data (non-finite entries, bad files)."""


class ShapeError(SSAError, ValueError):
    """Array shapes or dimensions do not agree."""


class DegenerateInputError(SSAError, ValueError):
    """Input is well-formed but degenerate, e.g. a zero-norm vector."""


class ParameterError(SSAError, ValueError):
    """A configuration parameter violates its constraints."""


class CapacityError(SSAError, ValueError):
    """Instance is larger than an exhaustive routine accepts."""


class OracleError(SSAError, ArithmeticError):
    """A finite-difference probe produced a non-finite value."""
