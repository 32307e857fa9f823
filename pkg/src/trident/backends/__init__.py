"""Language-model backends: scripted tables, toy n-grams, remote clients."""
from trident.backends.base import (
    BackendDescriptor,
    LMBackend,
    TokenSequence,
    VocabInfo,
    require_same_vocab,
)
from trident.backends.ngram import NGramBackend
from trident.backends.remote import RemoteBackend
from trident.backends.scripted import ScriptedBackend

__all__ = [
    "BackendDescriptor",
    "LMBackend",
    "NGramBackend",
    "RemoteBackend",
    "ScriptedBackend",
    "TokenSequence",
    "VocabInfo",
    "require_same_vocab",
]
