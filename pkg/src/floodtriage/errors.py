"""Exception types shared across the toolkit."""


class ContractViolation(ValueError):
    """An operation was called outside its documented contract."""


class IngestError(RuntimeError):
    """Annotation file could not be read or parsed.

    ``byte_offset`` is set when the failure came from malformed JSON.
    """

    def __init__(self, message: str, path: str | None = None,
                 byte_offset: int | None = None):
        super().__init__(message)
        self.path = path
        self.byte_offset = byte_offset


class MaskIOError(OSError):
    """Mask file could not be written or read back."""

    def __init__(self, message: str, path: str | None = None):
        super().__init__(message)
        self.path = path


class CaseBaseError(RuntimeError):
    """Case journal is inconsistent with the case-base schema."""
