"""Exception types raised by the library and the command-line tool."""


class VoxMotionError(Exception):
    """Base class for all library errors."""


class InvalidConfig(VoxMotionError, ValueError):
    pass


class ScanOrderError(VoxMotionError):
    """A frame arrived whose scan id is not strictly greater than the last one."""


class InvalidDt(VoxMotionError, ValueError):
    pass


class NonRigidTransform(VoxMotionError, ValueError):
    pass


class MissingOdometry(VoxMotionError):
    """No odometry sample lies within the matching window of a frame timestamp."""


class InvalidSpec(VoxMotionError, ValueError):
    pass


class LengthMismatch(VoxMotionError, ValueError):
    pass


class ParseError(VoxMotionError):
    """Malformed input file. Carries the offending path and, if known, line number."""

    def __init__(self, path, message, line=None):
        self.path = str(path)
        self.line = line
        where = self.path if line is None else f"{self.path}:{line}"
        super().__init__(f"{where}: {message}")


class InconsistentSchema(ParseError):
    pass


class NonMonotonicTimestamps(ParseError):
    pass
