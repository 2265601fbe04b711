"""Toolkit for refining entity-labeled image datasets with LLM verification,
decoding entity names under a token-trie constraint, and scoring predictions
against seen/unseen gold splits."""

__version__ = "0.1.0"

from entikit.kb import EntityRecord, EntityVocabulary, load_vocabulary, normalize_name

__all__ = [
    "EntityRecord",
    "EntityVocabulary",
    "load_vocabulary",
    "normalize_name",
    "__version__",
]
