"""Exception hierarchy shared across the engine.

Every error raised by trident's own logic derives from TridentError so the
CLI can catch one base class and exit with a categorized message.
"""


class TridentError(Exception):
    """Base class for all trident errors."""


# --- backend errors ---

class RemoteUnavailable(TridentError):
    """The remote logits/embedding server cannot be reached or errored."""


class PrefixTooLong(TridentError):
    """Prefix exceeds the backend's declared maximum context length."""


class VocabMismatch(TridentError):
    """Two backends (or a server handshake) disagree on vocabulary."""


class UnknownPrefix(TridentError):
    """A scripted backend has no entry for the requested prefix."""


# --- decoding errors ---

class LengthMismatch(TridentError):
    """Logit vectors of different lengths were combined."""


class StrategyBranchMissing(TridentError):
    """The prompts lack a branch required by the decoding strategy."""


# --- retrieval errors ---

class DuplicatePassageId(TridentError):
    """Corpus contains two passages with the same id."""


class EmptyCorpus(TridentError):
    """An index cannot be built over zero passages."""


class EmptyQuery(TridentError):
    """Query has no indexable terms after analysis."""


class DimensionMismatch(TridentError):
    """Embedding vectors of different dimensions were compared."""


class IndexFormatError(TridentError):
    """A persisted index directory is missing files or has a bad version."""


# --- context selection errors ---

class NoRetrievalHit(TridentError):
    """Retrieval returned nothing and no gold context exists."""


class EmptyPool(TridentError):
    """The candidate pool for irrelevant-context selection is empty."""


class EmbedderUnavailable(TridentError):
    """The embedder required for most-distant selection is down."""


# --- prompting errors ---

class MissingContext(TridentError):
    """Open-book rendering was requested without a context."""


# --- conflict generation errors ---

class PoolTooSmall(TridentError):
    """No valid substitute entity exists for a record."""


# --- reporting errors ---

class DatasetMismatch(TridentError):
    """Reports being compared cover different item id sets."""


class ConfigError(TridentError):
    """A run configuration is malformed or inconsistent."""
