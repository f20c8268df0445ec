"""Exception types shared across the package."""


class PerceptimetricError(Exception):
    """Base class for all errors raised by this package."""


class AudioError(PerceptimetricError):
    """Unreadable, unsupported, or degenerate audio input."""


class ArchiveError(PerceptimetricError):
    """Feature-archive format violation (write-side invariants or read-side corruption)."""


class BadMagicError(ArchiveError):
    """File does not start with the expected magic bytes / version."""


class TruncatedArchiveError(ArchiveError):
    """Index or payload extends past the end of the file."""


class UnknownStimulusError(ArchiveError, KeyError):
    """Stimulus id not present in an otherwise valid archive."""

    def __str__(self):  # KeyError quotes its message; keep it readable
        return Exception.__str__(self)


class ItemTableError(PerceptimetricError):
    """Malformed triplet item table."""


class ResponseTableError(PerceptimetricError):
    """Malformed human-response table."""


class DegenerateDataError(PerceptimetricError):
    """Input has no usable variation (constant vector, zero variance, too few units)."""
