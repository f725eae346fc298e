"""Exception types shared across the package."""


class FluxlabError(Exception):
    """Base class for all package errors."""


class ProbabilitySumError(FluxlabError):
    """Kernel weights do not sum to one within tolerance."""


class DuplicateSiteError(FluxlabError):
    """Kernel support lists the same lattice vector twice."""


class DegenerateSupportError(FluxlabError):
    """Kernel support does not span the full space (second-moment matrix singular)."""


class DimensionMismatchError(FluxlabError):
    """Argument dimension does not match the object's dimension."""


class NotSmoothError(FluxlabError):
    """Derivative-based operation requested on a non-smooth test function."""


class NonPositiveTimeError(FluxlabError):
    """Heat-kernel density requested at time t <= 0."""


class QuadratureNotConvergedError(FluxlabError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class UnsupportedCombinationError(FluxlabError):
    """No closed form and no convergent quadrature route for this input."""


class GramNotPSDError(FluxlabError):
    """Covariance Gram matrix not positive semidefinite after jitter escalation.

    This signals a bug in covariance evaluation, not a condition to tolerate.
    """


class PlanInvalidError(FluxlabError):
    """Simulation plan violates a structural invariant."""


class SpecMismatchError(FluxlabError):
    """Ensemble summary and analytic limit specification are incompatible."""


class TooFewSamplesError(FluxlabError):
    """Statistical test called with fewer samples than required."""


class DegenerateProjectionError(FluxlabError):
    """Linear-combination test requested with zero analytic variance."""


class ConfigParseError(FluxlabError):
    """Config file could not be parsed (syntax)."""


class ConfigValidationError(FluxlabError):
    """Config parsed but failed validation; message names the offending field."""
