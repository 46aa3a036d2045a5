"""Exception types raised across the workbench."""


class CastSimError(Exception):
    """Base class for all workbench errors."""


class InvalidStateError(CastSimError, ValueError):
    pass


class DivergenceError(CastSimError):
    """Explicit integration blew up (dt too large for the sampled stiffness)."""

    def __init__(self, message, step=None, time=None):
        super().__init__(message)
        self.step = step
        self.time = time


class LimitViolation(CastSimError):
    def __init__(self, message, joint=None, limit=None, time=None):
        super().__init__(message)
        self.joint = joint
        self.limit = limit
        self.time = time


class FrameOutOfView(CastSimError):
    pass


class TipNotFound(CastSimError):
    pass


class AlignmentError(CastSimError):
    pass


class EstimationFailed(CastSimError):
    pass


class GenerationFailed(CastSimError):
    pass


class ConfigError(CastSimError, ValueError):
    pass
