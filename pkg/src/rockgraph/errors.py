"""Exception types shared across the package."""


class RawFormatError(ValueError):
    """Raw voxel file and its header sidecar disagree or are malformed."""


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap before converging.

    Carries the last iterate and the residual at the point of failure.
    """

    def __init__(self, message, last=None, residual=None):
        super().__init__(message)
        self.last = last
        self.residual = residual


class IntegrationError(RuntimeError):
    """ODE integration failed; retains the last accepted state."""

    def __init__(self, message, last_phi=None, last_state=None):
        super().__init__(message)
        self.last_phi = last_phi
        self.last_state = last_state
