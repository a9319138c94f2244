"""Exception classes shared across the library."""


class ChaplyginError(Exception):
    """Base class for all library errors."""


class ExprSyntaxError(ChaplyginError):
    """Malformed expression text. Carries the byte offset and a hint."""

    def __init__(self, position, message, expected=None):
        self.position = position
        self.expected = expected
        hint = f" (expected {expected})" if expected else ""
        super().__init__(f"syntax error at offset {position}: {message}{hint}")


class UnknownIdentifier(ChaplyginError):
    """Name is neither a declared variable nor a builtin function."""

    def __init__(self, name, position=None):
        self.name = name
        self.position = position
        where = f" at offset {position}" if position is not None else ""
        super().__init__(f"unknown identifier '{name}'{where}")


class UnboundVariable(ChaplyginError):
    """Expression references a variable missing from the environment."""

    def __init__(self, name):
        self.name = name
        super().__init__(f"unbound variable '{name}'")


class DomainError(ChaplyginError):
    """Evaluation left the real domain (log/sqrt of negative, division by
    zero, non-finite result)."""


class SingularMetric(ChaplyginError):
    """Metric not positive definite (Cholesky failed) where SPD is required."""


class NonSkewTorsion(ChaplyginError):
    """Torsion candidate is not skew-symmetric in its lower indices."""


class SingularSaddle(ChaplyginError):
    """Constraint compatibility matrix is singular; multiplier system unsolvable."""


class StepLimitExceeded(ChaplyginError):
    """Adaptive integrator exceeded the configured step budget."""


class NonFiniteState(ChaplyginError):
    """Integration produced NaN or Inf state entries."""


class NotClosed(ChaplyginError):
    """Potential reconstruction requested for a 1-form that is not closed."""


class QuadratureFailure(ChaplyginError):
    """Line-integral quadrature did not converge."""


class LoopNotClosed(ChaplyginError):
    """Base loop endpoints do not coincide within tolerance."""


class InterpolationTooCoarse(ChaplyginError):
    """Base trajectory too sparse for the requested lift accuracy."""


class ParameterOutOfRange(ChaplyginError):
    """Catalog parameter violates its schema (positivity etc.)."""


class ConfigError(ChaplyginError):
    """Run configuration failed schema validation."""
