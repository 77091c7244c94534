"""Exception hierarchy shared by all modules."""


class HypFewError(Exception):
    """Base class for library errors."""


class DimensionError(HypFewError, ValueError):
    pass


class DomainError(HypFewError, ValueError):
    """Input lies outside the domain of a formula (beyond clamping tolerance)."""


class TangencyError(DomainError):
    pass


class CurvatureMismatchError(HypFewError, ValueError):
    pass


class SingularGradientError(HypFewError, ArithmeticError):
    """Distance gradient requested at a coincident pair of points."""


class QuadratureError(HypFewError, ArithmeticError):
    """Adaptive quadrature failed to reach its hard tolerance."""

    def __init__(self, message, estimate=None, error=None, intervals=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error
        self.intervals = intervals


class ConfigError(HypFewError, ValueError):
    """Invalid run configuration. ``field`` names the offending key."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class TrainingError(HypFewError, RuntimeError):
    def __init__(self, message, episode=None):
        super().__init__(message)
        self.episode = episode


class NumericError(HypFewError, ArithmeticError):
    """Nonfinite values appeared in a forward computation."""
