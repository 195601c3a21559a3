from typing import Optional


class XlvcError(Exception):
    """Base class for all pipeline errors."""
    pass


class FeatureFormatError(XlvcError):
    """Raised when an XVCF feature file cannot be decoded."""
    pass


class BadMagicError(FeatureFormatError):
    pass


class UnsupportedVersionError(FeatureFormatError):
    pass


class TruncatedPayloadError(FeatureFormatError):
    """Raised when the payload length disagrees with the header."""

    def __init__(self, path: str, expected: int, actual: int):
        self.path = path
        self.expected = expected
        self.actual = actual
        super().__init__(
            f"{path}: truncated payload, expected {expected} bytes, got {actual}"
        )


class ManifestError(XlvcError):
    pass


class DimensionMismatchError(XlvcError):
    pass


class NonFiniteError(XlvcError):
    pass


class TapeMismatchError(XlvcError):
    pass


class RegimeMismatchError(XlvcError):
    pass


class CheckpointError(XlvcError):
    pass


class MissingReferenceError(XlvcError):
    pass


class TrainingDivergenceError(XlvcError):
    """Raised when a batch produces a non-finite loss."""

    def __init__(self, batch_id: str, loss: float):
        self.batch_id = batch_id
        self.loss = loss
        super().__init__(f"training diverged at batch {batch_id} (loss={loss})")


class ConversionError(XlvcError):
    """Wraps an upstream failure with the conversion stage it happened in."""

    def __init__(self, stage: str, cause: Exception, utterance_id: Optional[str] = None):
        self.stage = stage
        self.utterance_id = utterance_id
        where = f" for {utterance_id}" if utterance_id else ""
        super().__init__(f"conversion failed at stage '{stage}'{where}: {cause}")


class UsageError(XlvcError, ValueError):
    """Invalid arguments to an operation, such as too few seeds or an unknown direction."""
    pass
