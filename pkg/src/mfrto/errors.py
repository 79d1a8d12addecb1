"""Exception types shared across the package."""


class MfrtoError(Exception):
    """Base class for all package-specific errors."""


class NotPositiveDefinite(MfrtoError):
    """Matrix could not be factorized even after jitter escalation."""


class DimensionMismatch(MfrtoError, ValueError):
    """Operands have incompatible shapes."""


class NonFiniteState(MfrtoError, ArithmeticError):
    """ODE state became NaN or infinite (integration blow-up)."""


class OutOfRange(MfrtoError, ValueError):
    """Scalar argument outside its admissible open/closed interval."""


class ModelEvaluationFailed(MfrtoError):
    """Low-fidelity simulator failed at a point that cannot be dropped."""


class EvaluationFailed(MfrtoError):
    """Plant or model batch evaluation failed (e.g. integration blow-up)."""


class SchemaMismatch(MfrtoError, ValueError):
    """Result directories or config files do not share a compatible schema."""


class ConfigError(MfrtoError, ValueError):
    """Campaign or parameter configuration failed validation."""
