"""Exception types shared across the toolkit.

Class names mirror the condition they report; all inherit from KenError so
callers (and the CLI) can catch domain failures with a single except clause.
"""


class KenError(Exception):
    """Base class for every toolkit error."""


class FormatError(KenError):
    """Malformed or internally inconsistent container file."""


class BadMagic(FormatError):
    """File does not start with the expected magic bytes."""


class UnsupportedVersion(FormatError):
    """Container version or payload encoding not understood by this build."""


class ChecksumMismatch(FormatError):
    """Stored CRC32 does not match the bytes it covers."""


class TruncatedFile(FormatError):
    """File ends before the declared content does."""


class CorruptMask(FormatError):
    """Position bitmask violates the per-row retained-count invariant."""


class DecompressError(FormatError):
    """Compressed body could not be decoded."""


class NonFiniteValue(KenError):
    """A weight payload contains NaN or infinity."""


class RowTooShort(KenError):
    """Row has too few samples for the requested computation."""


class LengthMismatch(KenError):
    """Paired rows differ in length."""


class ShapeMismatch(KenError):
    """Paired matrices differ in shape."""


class IncompatiblePair(KenError):
    """Snapshot pair differs in names, order, or shapes."""


class MaskShapeMismatch(KenError):
    """Selection mask does not match its matrix shape."""


class BaseMismatch(KenError):
    """Delta was built against a different base snapshot."""


class UnknownMatrix(KenError):
    """Referenced matrix name is not present in the snapshot."""


class PatternMatchesNothing(KenError):
    """Name pattern selected no matrices."""


class DivergedLoss(KenError):
    """Training produced a non-finite loss."""


class EmptyInput(KenError):
    """Metric computation received no samples."""
