"""Shared exception types."""


class ConfigurationError(ValueError):
    """Raised when inputs are structurally invalid (bad dimensions, infeasible
    settings, missing required pieces) as opposed to out-of-range arguments."""
