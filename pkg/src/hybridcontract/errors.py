"""Exception types raised across the package."""


class HybridError(Exception):
    """Base class for all package errors."""


class ConfigError(HybridError):
    """Invalid model definition, parameters or run configuration."""


class IntegrationError(HybridError):
    """The hybrid flow could not be computed."""


class ZenoSuspected(IntegrationError):
    """Too many resets, or resets accumulating in time."""


class TransversalityViolation(IntegrationError):
    """The vector field does not strictly enter the guard set."""


class NonFiniteState(IntegrationError):
    """The state became NaN or infinite."""


class EventAtHorizon(IntegrationError):
    """A reset coincides with the requested final time."""


class EventSequenceMismatch(IntegrationError):
    """Perturbed trajectories undergo different reset sequences."""


class NoPathFound(HybridError):
    """No reset-connected path joins the two states within the hop budget."""


class NotATranslation(HybridError):
    """The reset of an arc is not a translation on the sampled guard."""
