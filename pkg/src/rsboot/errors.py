"""Exception hierarchy for the rsboot package.

Every error raised by the library derives from :class:`RsbootError`; the
CLI maps each subclass to a pipeline stage and a distinct exit code.
"""


class RsbootError(Exception):
    """Base class for all rsboot errors."""


class ConfigError(RsbootError):
    """Invalid run configuration (bad flag value, quantile index rule, ...)."""


class ParseError(RsbootError):
    """Malformed input data stream."""


class ValidationError(RsbootError):
    """Structurally well-formed input violating a domain invariant."""


class RankError(RsbootError):
    """Too few design points for the requested model."""


class SingularFitError(RsbootError):
    """Rank-deficient design matrix; names the dependent column."""

    def __init__(self, column: str):
        self.column = column
        super().__init__(f"design matrix is rank deficient: column {column!r} "
                         f"is linearly dependent on earlier columns")


class PathologicalSurfaceError(RsbootError):
    """Objective evaluation overflowed or went non-finite."""


class InfeasibleError(RsbootError):
    """Dual-response target constraint cannot be met inside the box."""


class SingularCovarianceError(RsbootError):
    """Covariance matrix not invertible even after ridge regularization."""


class BootstrapError(RsbootError):
    """A bootstrap replicate failed repeatedly and the run was aborted."""


class UnsupportedPlotError(RsbootError):
    """Plot generation requested for an unsupported factor count."""
