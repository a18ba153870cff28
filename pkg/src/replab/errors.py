"""Exception hierarchy shared by the library and the command line."""


class ReplabError(Exception):
    """Base class; ``code`` is the machine-readable name used in CLI error JSON."""

    code = "error"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class GameError(ReplabError, ValueError):
    code = "InvalidGame"


class ShapeMismatch(GameError):
    code = "ShapeMismatch"


class DuplicateEdge(GameError):
    code = "DuplicateEdge"


class NotAntisymmetric(ReplabError, ValueError):
    code = "NotAntisymmetric"


class NotZeroSum(ReplabError, ValueError):
    code = "NotZeroSum"


class TooManyActions(ReplabError, ValueError):
    code = "TooManyActions"


class InvalidProfile(ReplabError, ValueError):
    code = "InvalidProfile"


class BoundaryPoint(ReplabError, ValueError):
    code = "BoundaryPoint"


class StepSizeUnderflow(ReplabError, RuntimeError):
    code = "StepSizeUnderflow"

    def __init__(self, message, t=None, point_index=None):
        super().__init__(message)
        self.t = t
        self.point_index = point_index


class InfiniteDivergence(ReplabError, ValueError):
    code = "InfiniteDivergence"


class DegenerateCloud(ReplabError, ValueError):
    code = "DegenerateCloud"


class NoCrossing(ReplabError, RuntimeError):
    code = "NoCrossing"
