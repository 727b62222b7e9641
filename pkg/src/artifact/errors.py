"""Exception types shared across modules."""


class DomainError(ValueError):
    """Query outside the admissible set (grid box, parameter range)."""


class UnsupportedModeError(ValueError):
    """Requested a mode that must be enabled explicitly."""


class DivergentIntegralError(ArithmeticError):
    """A boundary integral diverges at the requested point."""


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


class CFLError(RuntimeError):
    """Time step too large for the current velocity."""

    def __init__(self, msg, suggested_dt=None):
        super().__init__(msg)
        self.suggested_dt = suggested_dt


class SupportError(RuntimeError):
    """Field support is about to leave the grid."""


class FitRefused(ValueError):
    """Regression input does not satisfy the fit preconditions."""


class PicardAbort(RuntimeError):
    def __init__(self, msg, n):
        super().__init__(msg)
        self.n = n
