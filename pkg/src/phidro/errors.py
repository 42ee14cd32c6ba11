"""Exception hierarchy shared by all modules."""


class PhiDroError(Exception):
    """Base class for library errors."""


class IndeterminateForm(PhiDroError, ArithmeticError):
    """An extended-real operation produced an indeterminate form (e.g. inf - inf)."""


class NonConvergence(PhiDroError):
    """An iterative search exhausted its iteration budget."""


class GrowthUnbounded(PhiDroError):
    """No point below the numeric cap reaches the requested growth level."""


class AssumptionViolated(PhiDroError):
    """The divergence has no neighbourhood of 1 inside the interior of its domain."""


class POutOfRange(PhiDroError, ValueError):
    """Requested nominal probability exceeds the certified maximum."""


class EpsTooLarge(PhiDroError, ValueError):
    """The two-point feasibility conditions fail at the requested accuracy."""


class GapTooLarge(PhiDroError):
    """Primal and dual values disagree by more than the allowed tolerance."""


class ConfigError(PhiDroError, ValueError):
    """Invalid experiment configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
