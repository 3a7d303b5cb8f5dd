"""Exception types raised across the package."""


class AdaptivePcrError(Exception):
    """Base class for all package errors."""


class InvalidInputError(AdaptivePcrError, ValueError):
    """Input has the wrong shape, non-finite entries, or an out-of-range value."""


class DegenerateRankError(AdaptivePcrError):
    """A singular value required to be positive is below the rank tolerance."""


class DegenerateGapError(AdaptivePcrError):
    """A singular-value gap required to be positive is not."""


class NoDataError(AdaptivePcrError):
    """An action or intervention has no observations yet."""


class ConfigError(AdaptivePcrError, ValueError):
    """A configuration is inconsistent or infeasible."""


class AssumptionViolatedError(AdaptivePcrError):
    """Ground-truth factors violate a modelling assumption (e.g. span inclusion)."""


class IncompleteTraceError(AdaptivePcrError):
    """A bandit trace lacks the ground truth needed for regret accounting."""


class MalformedInputError(AdaptivePcrError, ValueError):
    """A tabular file has missing or unparsable cells."""


class SchemaError(AdaptivePcrError, ValueError):
    """A tabular file disagrees with its declared metadata."""
