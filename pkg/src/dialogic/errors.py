"""Exception hierarchy shared by all pipeline stages."""


class DialogicError(Exception):
    """Base class for every error raised by this package."""


class MalformedHeader(DialogicError, ValueError):
    pass


class UnsupportedEncoding(DialogicError, ValueError):
    pass


class TruncatedData(DialogicError, ValueError):
    pass


class BufferTooShort(DialogicError, ValueError):
    pass


class SegmentOutOfRange(DialogicError, ValueError):
    pass


class BackendUnreachable(DialogicError, RuntimeError):
    pass


class TranscriptKeyMissing(DialogicError, KeyError):
    pass


class MalformedResponse(DialogicError, ValueError):
    pass


class EmptyCorpus(DialogicError, ValueError):
    pass


class HeaderMismatch(DialogicError, ValueError):
    pass


class DimMismatch(DialogicError, ValueError):
    pass


class DuplicateToken(DialogicError, ValueError):
    pass


class ShapeMismatch(DialogicError, ValueError):
    pass


class DegenerateLabels(DialogicError, ValueError):
    """Raised when a label set lacks either positives or negatives."""
