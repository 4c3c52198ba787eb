"""Exception types raised across the package."""


class DctJpegError(Exception):
    """Base class for all errors raised by dctjpeg."""


# codec
class UnsupportedMarker(DctJpegError):
    pass


class TruncatedStream(DctJpegError):
    pass


class InvalidHuffmanCode(DctJpegError):
    pass


class MissingTable(DctJpegError):
    pass


class RangeOverflow(DctJpegError):
    pass


# analysis
class ZeroVariance(DctJpegError, ArithmeticError):
    pass


class NonBlockAligned(DctJpegError, ValueError):
    pass


class InconsistentMapDims(DctJpegError, ValueError):
    pass


class IndexMismatch(DctJpegError, ValueError):
    pass


class ShapeMismatch(DctJpegError, ValueError):
    pass


class OutOfBounds(DctJpegError, IndexError):
    pass


class TooSmall(DctJpegError, ValueError):
    pass


class MissingWeights(DctJpegError, KeyError):
    def __str__(self):
        # KeyError repr-quotes its message
        return str(self.args[0]) if self.args else ""


# cli
class EmptyDataset(DctJpegError):
    pass


class NoTrials(DctJpegError, ValueError):
    pass


class NotFound(DctJpegError, FileNotFoundError):
    pass
