"""Exception hierarchy. Each class carries a short ``category`` used by the CLI."""


class DisentangleError(Exception):
    category = "error"


class ShapeError(DisentangleError, ValueError):
    category = "shape"


class ConfigError(DisentangleError, ValueError):
    category = "config"


class DomainError(DisentangleError, ArithmeticError):
    category = "domain"


class ConstraintError(DisentangleError, ValueError):
    category = "constraint"


class UsageError(DisentangleError, RuntimeError):
    category = "usage"


class NumericalError(DisentangleError, ArithmeticError):
    category = "numerical"


class GradCheckError(NumericalError):
    category = "evaluation"


class TrainingError(NumericalError):
    category = "training"


class DataError(DisentangleError, OSError):
    category = "io"
