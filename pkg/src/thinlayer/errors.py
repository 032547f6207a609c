"""Exception hierarchy shared by all toolkit modules."""


class ThinLayerError(Exception):
    """Base class for every error raised by the toolkit."""


class InvalidConfig(ThinLayerError, ValueError):
    pass


class NoRootInRange(ThinLayerError):
    pass


class InvalidWidth(ThinLayerError, ValueError):
    pass


class InvalidGrid(ThinLayerError, ValueError):
    pass


class QuadratureFailure(ThinLayerError):
    pass


class ConvergenceFailure(ThinLayerError):
    pass


class InsufficientBoundStates(ThinLayerError):
    """Fewer eigenvalues below the continuum edge than requested."""

    def __init__(self, requested, found, edge):
        super().__init__(
            f"requested {requested} bound states, found {found} below edge {edge:g}"
        )
        self.requested = requested
        self.found = found
        self.edge = edge


class SingularShift(ThinLayerError):
    pass


class DegenerateFit(ThinLayerError):
    pass


class SingularOverlap(ThinLayerError):
    pass
