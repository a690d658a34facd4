"""Exception hierarchy shared by all ctcsum modules."""


class CtcsumError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(CtcsumError, ValueError):
    """An array argument has the wrong rank or incompatible dimensions."""


class InvalidTargetError(CtcsumError, ValueError):
    """A target sequence contains the blank id or a negative label id."""


class OutOfVocabularyError(CtcsumError, ValueError):
    """A label or token id lies outside the vocabulary it is used with."""


class InfeasibleTargetError(CtcsumError, ValueError):
    """The target cannot be aligned to the given number of frames (loss is infinite)."""


class SizeGuardError(CtcsumError, ValueError):
    """A brute-force oracle was asked to enumerate more states than its guard allows."""


class DivergenceError(CtcsumError, RuntimeError):
    """Training produced a non-finite loss or gradient."""


class CheckpointFormatError(CtcsumError, ValueError):
    """A checkpoint file is corrupt, truncated, or of an unsupported version."""


class CorpusFormatError(CtcsumError, ValueError):
    """A corpus, vocabulary, or embedding file does not match its documented format."""


class UsageError(CtcsumError, ValueError):
    """Bad command-line flags or flag combinations."""
