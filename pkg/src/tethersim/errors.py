"""Exception hierarchy shared by the solvers and the replay pipeline."""


class TetherError(Exception):
    """Base class for all tethersim errors."""


class InputError(TetherError, ValueError):
    """Invalid physical parameters or boundary conditions."""


class Unreachable(InputError):
    def __init__(self, distance=None, length=None):
        msg = "unreachable: straight-line distance exceeds tether length"
        if distance is not None and length is not None:
            msg += f" ({distance:.6g} m > {length:.6g} m)"
        super().__init__(msg)
        self.distance = distance
        self.length = length


class DegenerateGeometry(InputError):
    """Base and drone positions coincide."""


class DimensionMismatch(InputError):
    """A warm-start state does not match the target discretization."""


class SolverError(TetherError, RuntimeError):
    """A solver ran but did not produce a valid solution."""


class IllPosed(SolverError):
    """Endpoints are (nearly) vertically aligned in the solve frame."""


class AllGuessesFailed(SolverError):
    pass


class DragIterationDiverged(SolverError):
    pass


class RootFindingError(SolverError):
    def __init__(self, message, iterations=0, residual_norm=float("nan"), x=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual_norm = residual_norm
        self.x = x


class MaxIterations(RootFindingError):
    pass


class SingularJacobian(RootFindingError):
    pass


class Diverged(RootFindingError):
    """Residual grew for too many consecutive steps (early abort)."""


class ZeroLengthSegment(SolverError):
    pass


class NonPhysical(SolverError):
    """Equilibrium would require compression in at least one segment."""
