"""Exception types raised across the package."""


class VMVSError(Exception):
    """Base class for all errors raised by vmvs."""


class InputError(VMVSError, ValueError):
    """Malformed or unusable input data. Maps to CLI exit code 2."""


class ConfigError(VMVSError, ValueError):
    """Invalid configuration. Maps to CLI exit code 3."""


# kitti_io
class MissingKey(InputError):
    pass


class MalformedNumber(InputError):
    pass


class FieldCount(InputError):
    pass


class TruncatedRecord(InputError):
    pass


# geometry / depth completion
class SingularCalibration(InputError):
    pass


class EmptyInput(InputError):
    pass


# view synthesis
class CentroidBehindCamera(InputError):
    pass


class EmptyIntersection(InputError):
    pass


# orientation
class NonFinite(InputError):
    pass


class DegenerateVector(InputError):
    pass


class DegenerateFusion(VMVSError):
    """Fused angle vectors cancel out; no meaningful mean direction."""


class BadBinCount(ConfigError):
    pass


class ShapeMismatch(InputError):
    pass


class DimMismatch(InputError):
    pass


class EmptyDataset(InputError):
    pass


# evaluation
class NoGroundTruth(InputError):
    pass


class ZeroAP(VMVSError):
    pass


# synth
class EmptyScene(InputError):
    pass


class MarkerNotVisible(VMVSError):
    """The oriented marker cannot be found in a rendered view."""
