"""Entity vocabulary: normalized names plus optional knowledge summaries.

The vocabulary is immutable after loading and safe for concurrent reads.
Ids are positional (stream order), so the same source file always produces
the same vocabulary.
"""
from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional


class VocabularyError(ValueError):
    """Base class for vocabulary loading failures."""


class DuplicateNameError(VocabularyError):
    def __init__(self, name: str):
        super().__init__(f"duplicate entity name after normalization: {name!r}")
        self.name = name


class EmptyNameError(VocabularyError):
    def __init__(self, row: int):
        super().__init__(f"empty entity name at row {row}")
        self.row = row


def normalize_name(raw: str) -> str:
    """Canonicalize an entity name: NFC, lowercase, whitespace collapsed.

    Idempotent by construction (applied until fixpoint; in practice one
    extra pass only confirms stability).
    """
    s = raw
    for _ in range(4):
        t = " ".join(unicodedata.normalize("NFC", s).lower().split())
        if t == s:
            return t
        s = t
    return s


@dataclass(frozen=True)
class EntityRecord:
    """One knowledge-base entity: positional id, canonical name, summary text."""

    id: int
    canonical_name: str
    summary: str = ""


@dataclass
class EntityVocabulary:
    """Ordered entity records with an exact-match index on canonical names."""

    records: list[EntityRecord]
    name_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.name_index = {r.canonical_name: r.id for r in self.records}
        if len(self.name_index) != len(self.records):
            raise VocabularyError("records do not have unique canonical names")

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, entity_id: int) -> EntityRecord:
        return self.records[entity_id]

    def lookup(self, name: str) -> Optional[int]:
        """Return the id for ``name`` (normalized first), or None if absent."""
        return self.name_index.get(normalize_name(name))

    def names(self) -> list[str]:
        return [r.canonical_name for r in self.records]


def load_vocabulary(rows: Iterable[tuple[str, str]]) -> EntityVocabulary:
    """Build a vocabulary from (name, summary) rows.

    Ids are assigned 0..n-1 in stream order after name normalization.
    Raises EmptyNameError for blank names and DuplicateNameError when two
    rows normalize to the same name.
    """
    records: list[EntityRecord] = []
    seen: set[str] = set()
    for row, (name, summary) in enumerate(rows):
        canonical = normalize_name(name)
        if not canonical:
            raise EmptyNameError(row)
        if canonical in seen:
            raise DuplicateNameError(canonical)
        seen.add(canonical)
        records.append(EntityRecord(id=row, canonical_name=canonical, summary=summary))
    return EntityVocabulary(records=records)


def iter_vocabulary_rows(path: str | Path) -> Iterator[tuple[str, str]]:
    """Yield (name, summary) rows from a vocabulary file.

    JSON-lines files carry objects with a required "name" and optional
    "summary"; anything else is read as two-column tab-separated text
    (summary column optional).
    """
    path = Path(path)
    jsonl = path.suffix.lower() in {".jsonl", ".json", ".ndjson"}
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if jsonl:
                obj = json.loads(line)
                yield str(obj["name"]), str(obj.get("summary", "") or "")
            else:
                name, _, summary = line.partition("\t")
                yield name, summary


def load_vocabulary_file(path: str | Path) -> EntityVocabulary:
    return load_vocabulary(iter_vocabulary_rows(path))
