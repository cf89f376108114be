"""Exception types raised across the package."""


class ForcedKeplerError(Exception):
    """Base class for every error raised by this package."""


class PathTouchesOrigin(ForcedKeplerError):
    pass


class AmbiguousWinding(ForcedKeplerError):
    """A per-step angular increment reached pi; the grid is too coarse."""


class ZeroVelocity(ForcedKeplerError):
    pass


class GrowthViolation(ForcedKeplerError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class ExactZeroSample(ForcedKeplerError):
    pass


class TooCloseToCollision(ForcedKeplerError):
    pass


class NotInConstraintClass(ForcedKeplerError):
    pass


class NoConvergence(ForcedKeplerError):
    pass


class WindingLost(ForcedKeplerError):
    pass


class AntipodalEndpoints(ForcedKeplerError):
    pass


class ShootingFailed(ForcedKeplerError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class OverlappingEvents(ForcedKeplerError):
    pass


class WindowExceeded(ForcedKeplerError):
    pass


class CoincidentDirections(ForcedKeplerError):
    pass


class ParseError(ForcedKeplerError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class ValidationError(ForcedKeplerError):
    def __init__(self, message, key=None):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key
