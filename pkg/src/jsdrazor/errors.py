"""Exception and warning types shared across the package."""


class JsdRazorError(Exception):
    """Base class for all package errors."""


class EmptyData(JsdRazorError):
    """An operation needing at least one observation received an empty count vector."""


class DimensionError(JsdRazorError):
    """Two objects that must share a category count (or dimension) do not."""


class DomainError(JsdRazorError):
    """An argument lies outside the mathematical domain of the operation."""


class BoundaryError(JsdRazorError):
    """An empirical distribution with zero cells was passed where an interior point is required."""


class ConfigError(JsdRazorError):
    """Invalid model or experiment configuration."""


class NumericalUnderflow(JsdRazorError):
    """A probability underflowed past the point where downstream formulas are meaningful."""


class SampleTooSmall(JsdRazorError):
    """The observed sample size is below the validity threshold of a scoring rule."""


class UnsupportedDimension(JsdRazorError):
    """The parameter dimension exceeds what an exact/quadrature routine supports."""


class UnsupportedScale(JsdRazorError):
    """An exact enumeration was requested beyond desk scale."""


class HessianNotPD(JsdRazorError):
    """A Hessian required to be positive definite is not."""


class SimulatorContractError(JsdRazorError):
    """A simulator produced output violating its declared contract."""


class ConstraintError(JsdRazorError):
    """A parameter vector violates a model-specific constraint."""


class QuadratureWarning(UserWarning):
    """A quadrature convergence check failed its tolerance; the value may be inaccurate."""
