"""Seen/unseen accuracy with harmonic-mean summary, label mapping, visual match.

Gold items are partitioned into seen and unseen splits; the headline number
is the harmonic mean of the two top-1 accuracies, with a per-k table for
deeper ranks. Entity comparison happens on normalized names, and a missing
or empty prediction simply counts as wrong (the last-step filter can
legitimately return nothing).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from entikit.embedding import DimensionMismatchError
from entikit.kb import EntityVocabulary, normalize_name

SPLIT_SEEN = "seen"
SPLIT_UNSEEN = "unseen"
DEFAULT_KS = (1, 5, 10)


class DuplicateQueryIdError(ValueError):
    def __init__(self, query_id: str):
        super().__init__(f"duplicate query_id: {query_id}")
        self.query_id = query_id


class EmptySplitError(ValueError):
    def __init__(self, split: str):
        super().__init__(f"no gold items in split {split!r}; pass allow_empty_split to override")
        self.split = split


class UnmappedLabelError(KeyError):
    def __init__(self, label: str):
        super().__init__(f"label not present in mapping: {label!r}")
        self.label = label


class UnresolvedEntityError(KeyError):
    def __init__(self, name: str):
        super().__init__(f"mapped entity not in vocabulary: {name!r}")
        self.name = name


class EmptyMemoryError(ValueError):
    def __init__(self) -> None:
        super().__init__("memory base is empty")


@dataclass(frozen=True)
class GoldItem:
    query_id: str
    entity: str  # normalized canonical name
    split: str  # seen | unseen
    question: str = ""


@dataclass(frozen=True)
class Prediction:
    query_id: str
    ranked: tuple[str, ...]  # normalized names, best first


@dataclass
class EvalReport:
    acc_seen: float
    acc_unseen: float
    hm: float
    per_k: dict[int, dict[str, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "acc_seen": self.acc_seen,
            "acc_unseen": self.acc_unseen,
            "hm": self.hm,
            "per_k": {str(k): v for k, v in sorted(self.per_k.items())},
        }

    def format_table(self) -> str:
        lines = [
            f"{'k':>4}  {'HM':>7}  {'seen':>7}  {'unseen':>7}",
        ]
        for k, row in sorted(self.per_k.items()):
            lines.append(
                f"{k:>4}  {100 * row['hm']:>7.1f}  {100 * row['seen']:>7.1f}  {100 * row['unseen']:>7.1f}"
            )
        return "\n".join(lines)


def harmonic_mean(a: float, b: float) -> float:
    """2ab/(a+b), with hm = 0 whenever either accuracy is 0."""
    if a < 0 or b < 0:
        raise ValueError("harmonic_mean needs non-negative inputs")
    if a == 0.0 or b == 0.0:
        return 0.0
    return 2.0 * a * b / (a + b)


def _hit_rank(pred: Optional[Prediction], gold: GoldItem) -> Optional[int]:
    """0-based rank of the gold entity in the prediction, None if absent."""
    if pred is None:
        return None
    for rank, name in enumerate(pred.ranked):
        if name == gold.entity:
            return rank
    return None


def top_k_accuracy(
    predictions: Sequence[Prediction], golds: Sequence[GoldItem], k: int
) -> float:
    """Fraction of golds whose entity appears within the first k predictions."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not golds:
        return 0.0
    by_qid = _index_predictions(predictions)
    hits = 0
    for gold in golds:
        rank = _hit_rank(by_qid.get(gold.query_id), gold)
        if rank is not None and rank < k:
            hits += 1
    return hits / len(golds)


def _index_predictions(predictions: Sequence[Prediction]) -> dict[str, Prediction]:
    by_qid: dict[str, Prediction] = {}
    for pred in predictions:
        if pred.query_id in by_qid:
            raise DuplicateQueryIdError(pred.query_id)
        by_qid[pred.query_id] = pred
    return by_qid


def evaluate(
    predictions: Sequence[Prediction],
    golds: Sequence[GoldItem],
    ks: Sequence[int] = DEFAULT_KS,
    allow_empty_split: bool = False,
) -> EvalReport:
    """Top-1 seen/unseen accuracies, their harmonic mean, and a per-k table.

    With allow_empty_split, an empty split's contribution degenerates to the
    other split's accuracy instead of raising (a harness policy, off by
    default).
    """
    _index_predictions(predictions)  # surfaces duplicate prediction ids
    seen_ids: set[str] = set()
    for gold in golds:
        if gold.query_id in seen_ids:
            raise DuplicateQueryIdError(gold.query_id)
        seen_ids.add(gold.query_id)
    seen_golds = [g for g in golds if g.split == SPLIT_SEEN]
    unseen_golds = [g for g in golds if g.split == SPLIT_UNSEEN]

    def split_metrics(k: int) -> tuple[float, float, float]:
        acc_s = top_k_accuracy(predictions, seen_golds, k) if seen_golds else None
        acc_u = top_k_accuracy(predictions, unseen_golds, k) if unseen_golds else None
        if acc_s is None or acc_u is None:
            if not allow_empty_split:
                raise EmptySplitError(SPLIT_SEEN if acc_s is None else SPLIT_UNSEEN)
            only = acc_u if acc_s is None else acc_s
            only = 0.0 if only is None else only
            return only, only, only
        return acc_s, acc_u, harmonic_mean(acc_s, acc_u)

    acc_seen, acc_unseen, hm = split_metrics(1)
    per_k = {}
    for k in ks:
        s, u, h = split_metrics(k)
        per_k[int(k)] = {"seen": s, "unseen": u, "hm": h}
    return EvalReport(acc_seen=acc_seen, acc_unseen=acc_unseen, hm=hm, per_k=per_k)


# ---------------------------------------------------------------------------
# label mapping


def load_label_mapping(path: str | Path) -> dict[str, str]:
    """Two-column tab-separated mapping file; '#' starts a comment line."""
    mapping: dict[str, str] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            label, _, entity = line.partition("\t")
            mapping[normalize_name(label)] = normalize_name(entity)
    return mapping


def apply_label_mapping(
    mapping: Mapping[str, str],
    labels: Iterable[str],
    vocab: EntityVocabulary,
) -> list[int]:
    """Replace dataset class labels with vocabulary entity ids."""
    ids: list[int] = []
    for label in labels:
        key = normalize_name(label)
        if key not in mapping:
            raise UnmappedLabelError(label)
        entity_id = vocab.lookup(mapping[key])
        if entity_id is None:
            raise UnresolvedEntityError(mapping[key])
        ids.append(entity_id)
    return ids


# ---------------------------------------------------------------------------
# visual matching


@dataclass
class MemoryBase:
    embeddings: np.ndarray  # unit vectors, one row per item
    labels: np.ndarray  # entity id per row

    def __post_init__(self) -> None:
        self.embeddings = np.asarray(self.embeddings)
        self.labels = np.asarray(self.labels)
        if self.embeddings.shape[0] != self.labels.shape[0]:
            raise ValueError("one label per memory embedding required")


def visual_match(memory: MemoryBase, queries: np.ndarray) -> np.ndarray:
    """Label each query with its nearest memory item's entity (cosine, ties low)."""
    queries = np.asarray(queries)
    if memory.embeddings.shape[0] == 0:
        raise EmptyMemoryError()
    if queries.shape[1] != memory.embeddings.shape[1]:
        raise DimensionMismatchError(memory.embeddings.shape[1], queries.shape[1])
    sims = queries @ memory.embeddings.T
    nearest = np.argmax(sims, axis=1)  # argmax takes the first (lowest) index on ties
    return memory.labels[nearest]


# ---------------------------------------------------------------------------
# file formats


def read_predictions(path: str | Path) -> list[Prediction]:
    out: list[Prediction] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            out.append(
                Prediction(
                    query_id=str(obj["query_id"]),
                    ranked=tuple(normalize_name(str(n)) for n in obj["ranked"]),
                )
            )
    return out


def read_gold(path: str | Path, mapping: Optional[Mapping[str, str]] = None) -> list[GoldItem]:
    """Read gold items; with a mapping, the entity field holds class labels."""
    out: list[GoldItem] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            entity = normalize_name(str(obj["entity"]))
            if mapping is not None:
                if entity not in mapping:
                    raise UnmappedLabelError(entity)
                entity = mapping[entity]
            split = str(obj["split"])
            if split not in (SPLIT_SEEN, SPLIT_UNSEEN):
                raise ValueError(f"bad split {split!r} for query {obj['query_id']}")
            out.append(
                GoldItem(
                    query_id=str(obj["query_id"]),
                    entity=entity,
                    split=split,
                    question=str(obj.get("question", "")),
                )
            )
    return out


def write_predictions(predictions: Iterable[Prediction], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for pred in predictions:
            fh.write(
                json.dumps({"query_id": pred.query_id, "ranked": list(pred.ranked)}, ensure_ascii=False)
                + "\n"
            )
