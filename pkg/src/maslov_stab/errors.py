"""Exception hierarchy shared across the package."""


class MaslovStabError(Exception):
    """Base class for all package errors."""

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details


class HypothesisError(MaslovStabError):
    """An operator hypothesis failed (e.g. a limit matrix is not positive
    definite), so the conjugate-point machinery does not apply."""


class ConfigError(MaslovStabError):
    """Malformed problem definition file or invalid run configuration."""


class IntegrationError(MaslovStabError):
    """Frame propagation could not be completed reliably."""


class CrossingFormError(MaslovStabError):
    """A crossing form failed its positivity check; either the integration
    is unreliable or a hypothesis is violated upstream."""


class StabilizationError(MaslovStabError):
    """An index did not stabilize under domain doubling / grid refinement."""


class ConsistencyError(MaslovStabError):
    """Internal cross-check failed (rectangle identity, index agreement
    between independent counting methods, edge scans)."""
