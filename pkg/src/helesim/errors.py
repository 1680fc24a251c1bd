"""Exception hierarchy shared by every helesim module."""


class HeleShawError(Exception):
    """Base class for all errors raised by helesim."""


class InvalidFieldError(HeleShawError, ValueError):
    """A field holds NaN/Inf samples or has the wrong shape."""


class GridMismatchError(HeleShawError, ValueError):
    """Two fields that must share a grid do not."""


class SymbolContractError(HeleShawError, ValueError):
    """A Fourier multiplier cannot map real fields to real fields."""


class PreconditionError(HeleShawError, ValueError):
    """An operation was called outside its documented domain."""


class ExpansionDivergenceError(HeleShawError, ArithmeticError):
    """The operator expansion for G(h) failed its convergence monitor."""


class OracleFailureError(HeleShawError, RuntimeError):
    """The elliptic strip solver did not reach its tolerance."""


class DegenerateStateError(HeleShawError, ArithmeticError):
    """The Rayleigh-Taylor coefficient is not positive (numerical breakdown)."""


class ConfigError(HeleShawError, ValueError):
    """Invalid run configuration."""
