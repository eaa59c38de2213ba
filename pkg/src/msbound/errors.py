"""Exception types shared across the package."""


class MsboundError(Exception):
    """Base class for all library-specific errors."""


class HypothesisViolationError(MsboundError):
    """A structural hypothesis fails (defective unit-circle mode, non-orthogonal
    dynamics where orthogonality is required, spectral radius above one)."""


class NotStabilizableError(MsboundError):
    """The unit-circle subsystem is not reachable within the state dimension."""


class InsufficientAuthorityError(MsboundError):
    """Saturation radius does not exceed the noise first-moment bound."""


class RankDeficientError(MsboundError):
    """A matrix required to have full row rank is numerically rank-deficient."""


class NumericalFailureError(MsboundError):
    """An underlying numerical routine failed to converge or produced an
    inconsistent result."""


class PhaseContractError(MsboundError):
    """A policy was stepped at a time index inconsistent with its phase."""
