"""Exception taxonomy for the richardson package."""


class RichardsonError(Exception):
    """Base class for all package errors."""


class CapacityError(RichardsonError):
    """More pairs requested than the level set can hold."""


class ProblemFormatError(RichardsonError):
    """Problem file violates the schema; message carries the field path."""


class SingularEvaluationError(RichardsonError):
    """A residual or coefficient evaluation hit an exact pole.

    ``indices`` holds the offending (kind, i, j) triples, where kind is
    "level" for e_a == 2*eta_j collisions and "pair" for e_a == e_b.
    """

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(indices)


class ConsistencyError(RichardsonError):
    """A quantity that must be real carries too large an imaginary part."""


class InitializationError(RichardsonError):
    """Weak-coupling seed construction failed to converge."""


class DegenerateNullSpaceError(RichardsonError):
    """Cluster matrix null space is not one-dimensional at the requested point."""


class DegenerateTangentError(RichardsonError):
    """The derivative linear system at a critical point is singular."""


class UnresolvedRootError(RichardsonError):
    """A bracketed determinant root could not be polished to tolerance."""


class ContinuationError(RichardsonError):
    """A solution branch could not be continued to the requested coupling."""


class OracleDimensionError(RichardsonError):
    """Pair basis dimension exceeds the exact-diagonalization guard."""

    def __init__(self, message, dimension):
        super().__init__(message)
        self.dimension = dimension
