"""Exception hierarchy shared by all vectormap modules."""


class VectorMapError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(VectorMapError, ValueError):
    """An argument violates the documented preconditions."""


class UndefinedEmbeddingError(InvalidInputError):
    """Two graph edges cross at a point that is not a shared vertex."""


class InvalidModelError(InvalidInputError):
    """A step model returned something that is not a probability vector."""


class NoDetectionError(VectorMapError):
    """Decoding produced no usable polygon."""


class ParseError(VectorMapError, ValueError):
    """A serialized document is malformed."""
