"""Exception hierarchy. Every error raised by the library derives from PenningError."""


class PenningError(Exception):
    """Base class for library errors."""


class UnstableTrap(PenningError):
    """Trap parameters give no planar confinement (omega_perp^2 <= omega_W^2)."""


class CoincidentIons(PenningError):
    """Two ions closer than the configured minimum separation."""


class NoConvergence(PenningError):
    pass


class SaddleDetected(PenningError):
    """Stationary point whose planar Hessian is not positive definite."""


class NotPositiveDefinite(PenningError):
    pass


class FactorizationFailure(PenningError):
    pass


class ImaginaryFrequency(PenningError):
    pass


class StepTooLarge(PenningError):
    pass


class NumericalBlowup(PenningError):
    pass


class GridMismatch(PenningError):
    pass


class DurationMismatch(PenningError):
    pass


class ConfigParseError(PenningError):
    pass


class ConfigValidationError(PenningError):
    pass


class ZeroTemperatureWarning(UserWarning):
    """T_perp = 0 requested from the sampler; the equilibrium is returned as the only snapshot."""
