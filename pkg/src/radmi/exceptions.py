"""Error taxonomy shared by every module in the package.

IO failures (missing files, unreadable paths) surface as the builtin
``OSError`` family; everything below is a domain error.
"""


class RadmiError(Exception):
    """Base class for all domain errors raised by this package."""


class FormatError(RadmiError):
    """A tensor file or dataset directory violates the interchange contract."""


class ShapeMismatchError(RadmiError):
    """Array arguments have incompatible shapes for the requested operation."""


class DegenerateInputError(RadmiError):
    """Input is structurally valid but statistically unusable (too few
    samples, constant map, empty mask, weights that do not sum to one)."""


class SingularCovarianceError(RadmiError):
    """Cholesky factorization of a covariance matrix failed (not positive
    definite)."""


class InvalidPatchError(RadmiError):
    """Sliding-window patch size is even, too small, or exceeds the image."""
