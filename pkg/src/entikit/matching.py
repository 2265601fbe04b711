"""Exact kNN between entity names and captions, producing candidate assignments.

Search is brute force on purpose: the corpora handled here are desk scale,
and exactness lets tests compare against an exhaustive oracle. kNN ties
break toward the lower corpus index; when two entities claim the same image,
the higher similarity wins, then the lower entity id.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from entikit.embedding import DimensionMismatchError, EmbeddingProvider, embed_texts
from entikit.kb import EntityVocabulary


@dataclass(frozen=True)
class CaptionedImage:
    image_id: str
    caption: str
    image_ref: str = ""


@dataclass(frozen=True)
class CandidateAssignment:
    image_id: str
    caption: str
    candidate_entity_id: int
    similarity: float


def knn(queries: np.ndarray, corpus: np.ndarray, k: int) -> list[list[tuple[int, float]]]:
    """Exact top-k cosine neighbors of each query row among corpus rows.

    Inputs are unit vectors, so similarity is a plain dot product. Results
    are sorted by similarity descending, then ascending corpus index; each
    query gets min(k, len(corpus)) hits.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    queries = np.asarray(queries)
    corpus = np.asarray(corpus)
    if queries.ndim != 2 or corpus.ndim != 2 or queries.shape[1] != corpus.shape[1]:
        raise DimensionMismatchError(queries.shape[-1], corpus.shape[-1])
    sims = queries @ corpus.T
    take = min(k, corpus.shape[0])
    results: list[list[tuple[int, float]]] = []
    for row in sims:
        # stable sort on -sim keeps equal similarities in ascending index order
        order = np.argsort(-row, kind="stable")[:take]
        results.append([(int(i), float(row[i])) for i in order])
    return results


def build_candidate_assignments(
    vocab: EntityVocabulary,
    corpus: Sequence[CaptionedImage],
    provider: EmbeddingProvider,
    k: int = 5,
) -> list[CandidateAssignment]:
    """Assign at most one candidate entity to each image.

    Each entity retrieves its k most similar captions; when several entities
    retrieve the same image, the highest-similarity claim survives (ties to
    the lower entity id). Output follows corpus order.
    """
    if not corpus:
        raise ValueError("corpus must be non-empty")
    if len(vocab) == 0:
        return []
    caption_vecs = embed_texts(provider, [c.caption for c in corpus])
    name_vecs = embed_texts(provider, vocab.names())
    hits = knn(name_vecs, caption_vecs, k)
    best: dict[int, tuple[float, int]] = {}  # corpus idx -> (sim, entity id)
    for entity_id, entity_hits in enumerate(hits):
        for corpus_idx, sim in entity_hits:
            incumbent = best.get(corpus_idx)
            if incumbent is None or (sim, -entity_id) > (incumbent[0], -incumbent[1]):
                best[corpus_idx] = (sim, entity_id)
    return [
        CandidateAssignment(
            image_id=corpus[idx].image_id,
            caption=corpus[idx].caption,
            candidate_entity_id=entity_id,
            similarity=sim,
        )
        for idx, (sim, entity_id) in sorted(best.items())
    ]


def read_corpus(path: str | Path) -> list[CaptionedImage]:
    """Read a JSON-lines corpus with image_id / caption / image_ref fields."""
    images: list[CaptionedImage] = []
    seen: set[str] = set()
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            image_id = str(obj["image_id"])
            if image_id in seen:
                raise ValueError(f"duplicate image_id in corpus: {image_id}")
            seen.add(image_id)
            images.append(
                CaptionedImage(
                    image_id=image_id,
                    caption=str(obj["caption"]),
                    image_ref=str(obj.get("image_ref", "")),
                )
            )
    return images


def write_assignments(
    assignments: Iterable[CandidateAssignment], vocab: EntityVocabulary, path: str | Path
) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for a in assignments:
            fh.write(
                json.dumps(
                    {
                        "image_id": a.image_id,
                        "caption": a.caption,
                        "candidate_entity": vocab[a.candidate_entity_id].canonical_name,
                        "similarity": a.similarity,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_assignments(path: str | Path, vocab: EntityVocabulary) -> list[CandidateAssignment]:
    out: list[CandidateAssignment] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            entity_id = vocab.lookup(obj["candidate_entity"])
            if entity_id is None:
                raise ValueError(f"unknown candidate entity: {obj['candidate_entity']!r}")
            out.append(
                CandidateAssignment(
                    image_id=str(obj["image_id"]),
                    caption=str(obj["caption"]),
                    candidate_entity_id=entity_id,
                    similarity=float(obj["similarity"]),
                )
            )
    return out
