"""Exception hierarchy for the engine.

Per-detection problems (InsufficientDepth, ProbeFailure) are recoverable:
the ingest loop skips the detection or keeps prior state and counts the
event in the ingest report.  Storage and schema errors abort the run.
"""


class EgomemError(Exception):
    """Base class for all engine errors."""


class InsufficientDepth(EgomemError):
    """Too few valid depth pixels under a detection to lift it."""


class DimensionMismatch(EgomemError):
    """Embedding dimensions disagree with the manifest or each other."""


class ProbeFailure(EgomemError):
    """A feature probe could not answer an embed_region request."""


class OracleUnavailable(EgomemError):
    """The association oracle could not be reached or answered garbage."""


class NonMonotoneTimestamp(EgomemError):
    """Appending a record older than the buffer tail."""


class UnknownId(EgomemError):
    """Object id not present in memory."""


class UnknownObject(EgomemError):
    """Object name not present in an answer key."""


class UnknownColumn(EgomemError):
    """Structured query references a column outside the schema."""


class MalformedPredicate(EgomemError):
    """Structured query text could not be parsed."""


class EmptyMemory(EgomemError):
    """Retrieval requested against a memory with no frames/entries."""


class SchemaMismatch(EgomemError):
    """Episode or snapshot schema_version is not supported."""


class CorruptBlob(EgomemError):
    """A binary blob has the wrong length or cannot be decoded."""

    def __init__(self, message, frame_id=None):
        super().__init__(message)
        self.frame_id = frame_id


class MissingFile(EgomemError):
    """A file referenced by a manifest does not exist."""


class StorageFailure(EgomemError):
    """Snapshot could not be written."""


class InvalidSpec(EgomemError):
    """A synthetic world spec violates its invariants."""


class MismatchedEpisode(EgomemError):
    """Snapshot and answer key come from different episodes."""
