"""Exception hierarchy shared by every module."""


class TrackingError(Exception):
    """Base class for all package errors."""


class EmptyMask(TrackingError):
    pass


class EmptyPixelSet(TrackingError):
    pass


class DegeneratePixelSet(TrackingError):
    pass


class DegenerateFeature(TrackingError):
    pass


class OutOfOrderFrame(TrackingError):
    pass


class MissingFlowWhenPixelCuesEnabled(TrackingError):
    pass


class SpecInfeasible(TrackingError):
    pass


class EmptyGroundTruth(TrackingError):
    pass


class FormatError(TrackingError):
    """Malformed input file. ``path`` and ``line`` locate the offending record."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = str(path)
        if line is not None:
            where = f"{where}:{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class ParseError(FormatError):
    pass


class NonPositiveSize(FormatError):
    pass


class RunSumMismatch(FormatError):
    pass


class SizeMismatch(FormatError):
    pass


class BadMagic(FormatError):
    pass


class TruncatedFile(FormatError):
    pass


class DimMismatch(FormatError):
    pass


class NotUnitNorm(FormatError):
    pass


class UnknownKey(FormatError):
    pass


class BadValue(FormatError):
    pass
