"""Exception types shared across the package."""


class GreedyRouteError(Exception):
    """Base class for all package errors."""


# -- grids and operators ----------------------------------------------------

class GridTooSmall(GreedyRouteError):
    pass


class GridMismatch(GreedyRouteError):
    pass


class ResonantShift(GreedyRouteError):
    """Helmholtz shift coincides with a Laplacian eigenvalue."""


class IncompatibleRHS(GreedyRouteError):
    """Poisson right-hand side with a nonzero mean."""


# -- solvers ----------------------------------------------------------------

class ZeroDiagonal(GreedyRouteError):
    pass


class HierarchyMismatch(GreedyRouteError):
    pass


class OddGrid(GreedyRouteError):
    pass


class NonlinearSolver(GreedyRouteError):
    pass


# -- routing ----------------------------------------------------------------

class EmptyCosts(GreedyRouteError):
    pass


class BadTau(GreedyRouteError):
    pass


class BadId(GreedyRouteError):
    pass


class LengthMismatch(GreedyRouteError):
    pass


class DivergedIterate(GreedyRouteError):
    """Iterate went NaN/inf; carries the trace collected so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


# -- neural -----------------------------------------------------------------

class ShapeMismatch(GreedyRouteError):
    pass


class KindMismatch(GreedyRouteError):
    pass


# -- training ---------------------------------------------------------------

class EmptyDataset(GreedyRouteError):
    pass


class MissingSurrogate(GreedyRouteError):
    pass


# -- theory -----------------------------------------------------------------

class SearchTooLarge(GreedyRouteError):
    pass


class NoConvergence(GreedyRouteError):
    pass


class DegenerateDenominator(GreedyRouteError):
    pass


class NotSimultaneouslyDiagonalizable(GreedyRouteError):
    pass


# -- I/O and CLI ------------------------------------------------------------

class IoError(GreedyRouteError):
    pass


class FormatVersionMismatch(GreedyRouteError):
    pass


class ChecksumMismatch(GreedyRouteError):
    pass


class VersionMismatch(GreedyRouteError):
    pass


class ConfigParse(GreedyRouteError):
    pass


class MissingCheckpoint(GreedyRouteError):
    pass


class BadMode(GreedyRouteError):
    """Fourier mode index outside the resolvable range."""


class NonFiniteField(GreedyRouteError):
    """A field picked up inf or NaN entries."""
