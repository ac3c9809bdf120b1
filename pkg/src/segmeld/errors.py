"""Exception hierarchy shared by all segmeld modules."""


class SegmeldError(Exception):
    """Base class for every error raised by this package."""


class MalformedHeader(SegmeldError, ValueError):
    pass


class TruncatedPayload(SegmeldError, ValueError):
    pass


class IoFailure(SegmeldError, OSError):
    pass


class ValueOutOfRange(SegmeldError, ValueError):
    pass


class InfeasiblePlacement(SegmeldError, RuntimeError):
    pass


class DimensionMismatch(SegmeldError, ValueError):
    pass


class EmptyMask(SegmeldError, ValueError):
    pass


class EmptyBatch(SegmeldError, ValueError):
    pass


class InsufficientClasses(SegmeldError, ValueError):
    pass


class InsufficientMembers(SegmeldError, ValueError):
    pass


class NonFiniteLoss(SegmeldError, FloatingPointError):
    pass


class GalleryTooSmall(SegmeldError, ValueError):
    pass


class UnknownClassInExpected(SegmeldError, KeyError):
    pass


class UnknownClass(SegmeldError, KeyError):
    pass


class MissingPair(SegmeldError, ValueError):
    pass


class ConfigError(SegmeldError, ValueError):
    pass


class NeedsReview(SegmeldError):
    """A capture whose foreground could not be split automatically."""

    def __init__(self, found, reason=None):
        self.found = found
        self.reason = reason or f"expected 2 components, found {found}"
        super().__init__(self.reason)


class CentroidTie(NeedsReview):
    def __init__(self, x):
        super().__init__(2, f"component centroids share x = {x:g}")
