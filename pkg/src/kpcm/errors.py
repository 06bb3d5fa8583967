"""Exception types raised by the library."""


class KPCMError(Exception):
    """Base class for all library errors."""


class SingularLinearSystem(KPCMError):
    pass


class ConvergenceFailure(KPCMError):
    pass


class RootsNotConverged(KPCMError):
    pass


class PoleCollision(KPCMError):
    """Two particles (or a particle and an evaluation point) got too close.

    ``min_sinh`` carries the offending ``|sinh(gamma * dx)|`` when known.
    """

    def __init__(self, msg, min_sinh=None):
        super().__init__(msg)
        self.min_sinh = min_sinh


class EvaluationAtPole(KPCMError):
    pass


class StepUnderflow(KPCMError):
    def __init__(self, msg, t=None):
        super().__init__(msg)
        self.t = t


class BranchAmbiguity(KPCMError):
    pass


class NewtonDivergence(KPCMError):
    def __init__(self, msg, iterations=None, residual=None):
        super().__init__(msg)
        self.iterations = iterations
        self.residual = residual
