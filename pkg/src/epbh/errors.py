"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input violates a documented contract (dimension, domain, or schema)."""


class QuadratureError(RuntimeError):
    """Derandomization quadrature failed to produce a finite result."""
