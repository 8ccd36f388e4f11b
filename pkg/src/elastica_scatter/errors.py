"""Exception types raised across the package."""


class ElasticaError(Exception):
    """Base class for all package errors."""


class RankDeficiencyError(ElasticaError):
    """The closure constraint Jacobian lost full row rank (degenerate curve)."""

    def __init__(self, message, condition=float("inf")):
        super().__init__(message)
        self.condition = condition


class FeasibilityError(ElasticaError):
    """Feasibility restoration did not reach the requested tolerance."""

    def __init__(self, message, defect):
        super().__init__(message)
        self.defect = defect


class SelfIntersectionError(ElasticaError):
    """A curve that must be embedded intersects itself."""


class ForwardSolveError(ElasticaError):
    """The boundary integral system could not be solved reliably."""

    def __init__(self, message, condition=float("nan")):
        super().__init__(message)
        self.condition = condition


class SaddlePointError(ElasticaError):
    """The bordered Gauss-Newton system is singular or ill-conditioned."""

    def __init__(self, message, condition=float("nan")):
        super().__init__(message)
        self.condition = condition


class StagnationError(ElasticaError):
    """Backtracking found no acceptable step length."""


class ConfigError(ElasticaError, ValueError):
    """Invalid experiment or solver configuration."""
