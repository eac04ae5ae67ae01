"""Exception types raised across the package."""


class DynakeyError(Exception):
    """Base class for all package errors."""


# geometry
class DegenerateMotion(DynakeyError, ValueError):
    pass


class DegenerateLine(DynakeyError, ValueError):
    pass


class InvalidFundamental(DynakeyError, ValueError):
    pass


class InsufficientMatches(DynakeyError, ValueError):
    pass


class NoConsensus(DynakeyError, RuntimeError):
    pass


class BehindCamera(DynakeyError, ValueError):
    pass


class NonPositiveDepth(DynakeyError, ValueError):
    pass


# probability laws
class NegativeDepth(DynakeyError, ValueError):
    pass


class NegativeError(DynakeyError, ValueError):
    pass


class OutOfBounds(DynakeyError, IndexError):
    pass


# oim
class DimensionMismatch(DynakeyError, ValueError):
    pass


class MissingDepth(DynakeyError, ValueError):
    pass


class NoNeighbors(DynakeyError, ValueError):
    pass


# io / config
class InvalidConfig(DynakeyError, ValueError):
    pass


class ParseError(DynakeyError, ValueError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class NonMonotonicTimestamps(ParseError):
    pass


class UnsupportedBitDepth(DynakeyError, ValueError):
    pass


class DatasetIOError(DynakeyError, OSError):
    pass


# evaluation
class InsufficientOverlap(DynakeyError, ValueError):
    pass


class ZeroBaseline(DynakeyError, ZeroDivisionError):
    pass
