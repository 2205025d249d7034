"""Exception hierarchy. Each class carries the CLI exit code for its category."""


class M3RError(Exception):
    exit_code = 1


class ConfigError(M3RError, ValueError):
    exit_code = 2


class FormatError(M3RError, ValueError):
    """Malformed GVOL/M3RF/M3RD/M3RC/CSV input."""

    exit_code = 3


class GridError(M3RError, ValueError):
    exit_code = 4


class TargetOutsideGrid(GridError):
    pass


class RoiOutOfBounds(GridError):
    pass


class CellOutOfBounds(GridError):
    pass


class InsufficientData(M3RError, ValueError):
    exit_code = 5


class InsufficientFrames(InsufficientData):
    pass


class TooFewKnots(InsufficientData):
    pass


class SeriesTooShort(InsufficientData):
    pass


class EmptyDataset(InsufficientData):
    pass


class NoMatchWithinWindow(M3RError, LookupError):
    exit_code = 6


class InvalidValue(M3RError, ValueError):
    exit_code = 7


class ShapeMismatch(InvalidValue):
    pass


class LengthMismatch(InvalidValue):
    pass


class EmptyInput(InvalidValue):
    pass


class InvalidCode(InvalidValue):
    pass


class NegativeSpeed(InvalidValue):
    pass


class NoCache(M3RError, RuntimeError):
    exit_code = 8
