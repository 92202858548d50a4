"""Exception hierarchy. Every error raised deliberately by the package derives from KaonBohmError."""


class KaonBohmError(Exception):
    pass


# grids and solver
class GridTooCoarse(KaonBohmError):
    pass


class PacketOutsideGrid(KaonBohmError):
    pass


class StabilityViolation(KaonBohmError):
    pass


class NormDrift(KaonBohmError):
    pass


class GridMismatch(KaonBohmError):
    pass


# packets and trajectories
class NegativeElapsed(KaonBohmError, ValueError):
    pass


class NonPositiveElapsed(NegativeElapsed):
    pass


class QuantileOutOfRange(KaonBohmError, ValueError):
    pass


class NodeRegion(KaonBohmError):
    pass


class OutOfGrid(KaonBohmError):
    pass


# kaon algebra
class DegenerateMixing(KaonBohmError, ValueError):
    pass


class NegativeTime(KaonBohmError, ValueError):
    pass


# event generation
class GeometryInfeasible(KaonBohmError):
    pass


class NegativeQ(KaonBohmError, ValueError):
    pass


class NoCrossing(KaonBohmError):
    pass


class MissedExtent(KaonBohmError):
    pass


# reconstruction
class ParallelLines(KaonBohmError):
    pass


class VertexBehindSource(KaonBohmError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class NoMinimumInWindow(KaonBohmError):
    pass


class EmptyCloud(KaonBohmError):
    pass


# analysis
class MismatchedEventSets(KaonBohmError):
    pass


class ConfigError(KaonBohmError):
    pass
