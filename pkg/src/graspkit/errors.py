"""Exception types raised across graspkit."""


class GraspkitError(Exception):
    pass


class NonPositiveDepth(GraspkitError):
    pass


class BehindCamera(GraspkitError):
    pass


class OutOfFrame(GraspkitError):
    pass


class DegenerateTranslation(GraspkitError):
    pass


class DegenerateConfiguration(GraspkitError):
    pass


class BehindCameraSolution(GraspkitError):
    pass


class PlacementFailure(GraspkitError):
    pass


class EmptyMask(GraspkitError):
    pass


class NoDepthReturn(GraspkitError):
    pass


class NoFeasibleGrasp(GraspkitError):
    pass


class MalformedInput(GraspkitError):
    pass
