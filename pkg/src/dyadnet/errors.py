"""Exception hierarchy shared across the package."""


class DyadnetError(Exception):
    """Base class for all package errors."""


class IncompleteDataError(DyadnetError):
    """A relational array is missing one or more off-diagonal dyads."""


class SingularDesignError(DyadnetError):
    """The design matrix (or a weighted version of it) is rank deficient."""

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class InsufficientActorsError(DyadnetError):
    """Too few actors for the requested estimator."""


class InvalidResidualError(DyadnetError):
    """Residual matrix violates the structure required by an estimator."""


class NotInvertibleError(DyadnetError):
    """An exchangeable covariance matrix is singular (or numerically so)."""


class DimensionError(DyadnetError, ValueError):
    """Array shapes are inconsistent with the stated actor/layer counts."""


class ConfigError(DyadnetError, ValueError):
    """Invalid simulation or command configuration."""
