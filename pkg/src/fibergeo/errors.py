"""Exception types shared across the package."""


class FibergeoError(Exception):
    """Base class for all package errors."""


class ShapeError(FibergeoError):
    """Operands have incompatible matrix shapes or mismatched base points."""


class RankError(FibergeoError):
    """A matrix required to be full rank fails the rank tolerance."""


class DomainError(FibergeoError):
    """A parameter lies outside the domain of a geodesic or coefficient."""


class ConvergenceError(FibergeoError):
    """An iterative solver failed to reach its tolerance."""

    def __init__(self, message, iterations=0, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class GramMismatchError(FibergeoError):
    """Alignment requested between matrices with different induced metrics.

    ``indices`` lists the offending sample positions for field-level
    alignment; it is empty for single-fiber calls.
    """

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(indices)


class ManifoldMismatchError(FibergeoError):
    """Two fields do not live over the same sampled manifold."""


class InterpolationError(FibergeoError):
    """A pointwise boundary-value solve failed during field interpolation."""

    def __init__(self, message, index, point_id=None):
        super().__init__(message)
        self.index = index
        self.point_id = point_id


class InputFormatError(FibergeoError):
    """A structured input file is malformed; ``field`` names the bad entry."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
