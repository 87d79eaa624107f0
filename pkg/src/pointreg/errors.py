"""Exception types shared across the package."""


class PointregError(Exception):
    """Base class for all package-specific errors."""


class EmptySetError(PointregError, ValueError):
    """A point set with zero points where at least one is required."""


class EmptyCorrespondenceError(PointregError, ValueError):
    """A correspondence map with zero entries where at least one is required."""


class EmptyBatchError(PointregError, ValueError):
    """A batch evaluation invoked with no pairs."""


class NonInvertibleError(PointregError, ValueError):
    """Affine transform whose linear part is singular (|det| <= 1e-12)."""


class NestingTooDeepError(PointregError, ValueError):
    """Attempt to compose beyond the supported nesting depth of 2."""


class SingularSystemError(PointregError, ValueError):
    """The TPS kernel system is numerically singular.

    Cannot occur with the fixed 3x3 control grid; kept as a defensive
    signal for degenerate configurations.
    """


class LengthMismatchError(PointregError, ValueError):
    """Parameter/gradient/state vectors of inconsistent lengths."""


class DivergenceError(PointregError, RuntimeError):
    """Registration loss exceeded 10x its initial value for 50 consecutive iterations."""


class ConfigError(PointregError, ValueError):
    """Invalid configuration values."""


class ParseError(PointregError, ValueError):
    """Malformed dataset or results file."""


class ValidationError(PointregError, ValueError):
    """Well-formed file whose contents violate the format's invariants."""
