"""Exception hierarchy.

Every error carries a short machine-parsable ``code`` so the CLI can emit
one-line diagnostics of the form ``<code>: <message>``.
"""


class UgicError(Exception):
    code = "error"


class DimensionMismatchError(UgicError):
    """Image dims not divisible by the codec's downsampling factor."""
    code = "dimension-mismatch"


class ShapeMismatchError(UgicError):
    code = "shape-mismatch"


class DepthMismatchError(UgicError):
    """Conditioning parameters sized for a different channel depth."""
    code = "depth-mismatch"


class SymbolOutOfRangeError(UgicError):
    code = "symbol-out-of-range"


class CorruptStreamError(UgicError):
    code = "corrupt-stream"


class BadMagicError(CorruptStreamError):
    code = "bad-magic"


class UnsupportedVersionError(CorruptStreamError):
    code = "version-unsupported"


class LengthMismatchError(CorruptStreamError):
    code = "length-mismatch"


class DigestMismatchError(UgicError):
    """Checkpoint/bitstream or manifest/file digest disagreement."""
    code = "digest-mismatch"


class NumericError(UgicError):
    """Likelihood underflow or non-finite value in the entropy model."""
    code = "numeric-error"


class NonFiniteLossError(UgicError):
    code = "non-finite-loss"


class CropOutOfBoundsError(UgicError):
    code = "crop-out-of-bounds"


class FrozenParameterError(UgicError):
    """A parameter that was frozen for the current stage changed anyway."""
    code = "frozen-parameter-changed"


class UninitializedStageError(UgicError):
    """Stage 2 requested without a trained Stage-1 model or checkpoint."""
    code = "stage-uninitialized"
