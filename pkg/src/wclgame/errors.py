class ValidationError(ValueError):
    """Raised when user-supplied data violates a model invariant."""


class InfeasibleError(RuntimeError):
    """Raised when a charging plan cannot satisfy the SOC constraints."""
