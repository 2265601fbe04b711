"""Expand refined records into multi-task examples and manage shard files.

Each record becomes exactly five examples: one entity target, one rationale
target, and three question/answer targets, distinguished by task-prefixed
inputs. Shards are JSON-lines with a sidecar manifest holding per-shard
sha256 hashes, so any tampering or truncation is caught on read.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from entikit.embedding import DimensionMismatchError
from entikit.kb import normalize_name
from entikit.refine import RefinedRecord

TASK_ENTITY = "entity"
TASK_RATIONALE = "rationale"
TASK_QA = "qa"

DEFAULT_ENTITY_PROMPT = "what is the main entity in this image?"
DEFAULT_RATIONALE_PREFIX = "[rationale]"
DEFAULT_LEAK_THRESHOLD = 0.95


class ManifestMismatchError(RuntimeError):
    def __init__(self, path: str, expected: str, actual: str):
        super().__init__(f"shard {path} hash mismatch: manifest {expected}, file {actual}")
        self.path = path


@dataclass(frozen=True)
class TrainingExample:
    task: str
    input_text: str
    target_text: str
    image_id: str


@dataclass
class ExpandConfig:
    entity_prompt: str = DEFAULT_ENTITY_PROMPT
    rationale_prefix: str = DEFAULT_RATIONALE_PREFIX


def expand_examples(record: RefinedRecord, config: ExpandConfig | None = None) -> list[TrainingExample]:
    """One entity + one rationale + three QA examples, in that order.

    QA inputs are guaranteed to end in '?' (a trailing one is appended when
    the generated question lacks it).
    """
    config = config or ExpandConfig()
    examples = [
        TrainingExample(
            task=TASK_ENTITY,
            input_text=config.entity_prompt,
            target_text=record.outcome.entity_name,
            image_id=record.image_id,
        ),
        TrainingExample(
            task=TASK_RATIONALE,
            input_text=config.rationale_prefix,
            target_text=record.outcome.rationale,
            image_id=record.image_id,
        ),
    ]
    for pair in record.qa_pairs:
        question = pair.question if pair.question.endswith("?") else pair.question + "?"
        examples.append(
            TrainingExample(
                task=TASK_QA,
                input_text=question,
                target_text=pair.answer,
                image_id=record.image_id,
            )
        )
    return examples


def expand_records(
    records: Iterable[RefinedRecord], config: ExpandConfig | None = None
) -> list[TrainingExample]:
    out: list[TrainingExample] = []
    for record in records:
        out.extend(expand_examples(record, config))
    return out


def leak_filter(
    records: Sequence,
    record_embeddings: np.ndarray,
    eval_embeddings: np.ndarray,
    threshold: float = DEFAULT_LEAK_THRESHOLD,
) -> tuple[list, list]:
    """Partition records into (kept, removed) against an eval embedding set.

    A record is removed iff its max cosine similarity to any eval embedding
    is strictly greater than the threshold. An empty eval set keeps everything.
    """
    record_embeddings = np.asarray(record_embeddings)
    eval_embeddings = np.asarray(eval_embeddings)
    if len(records) != record_embeddings.shape[0]:
        raise ValueError("one embedding per record required")
    if eval_embeddings.size == 0:
        return list(records), []
    if record_embeddings.shape[1] != eval_embeddings.shape[1]:
        raise DimensionMismatchError(record_embeddings.shape[1], eval_embeddings.shape[1])
    max_sim = (record_embeddings @ eval_embeddings.T).max(axis=1)
    kept: list = []
    removed: list = []
    for record, sim in zip(records, max_sim):
        (removed if sim > threshold else kept).append(record)
    return kept, removed


def split_seen_unseen(
    examples: Sequence[TrainingExample], seen_entities: set[str]
) -> tuple[list[TrainingExample], list[TrainingExample]]:
    """Route examples by whether their entity is in the seen set.

    Entity and QA examples go by their own target; rationale examples follow
    the entity of their record (taken from the entity example sharing the
    image_id, unseen when there is none).
    """
    seen_norm = {normalize_name(name) for name in seen_entities}
    record_entity: dict[str, str] = {}
    for ex in examples:
        if ex.task == TASK_ENTITY:
            record_entity[ex.image_id] = normalize_name(ex.target_text)
    seen: list[TrainingExample] = []
    unseen: list[TrainingExample] = []
    for ex in examples:
        if ex.task == TASK_RATIONALE:
            key = record_entity.get(ex.image_id)
        else:
            key = normalize_name(ex.target_text)
        (seen if key is not None and key in seen_norm else unseen).append(ex)
    return seen, unseen


# ---------------------------------------------------------------------------
# shard IO


@dataclass
class ShardManifest:
    shards: list[dict] = field(default_factory=list)  # {"path", "count", "sha256"}
    config_hash: str = ""

    def dump(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            json.dump({"shards": self.shards, "config_hash": self.config_hash}, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "ShardManifest":
        with Path(path).open("r", encoding="utf-8") as fh:
            obj = json.load(fh)
        return cls(shards=list(obj["shards"]), config_hash=str(obj.get("config_hash", "")))


def example_to_json(ex: TrainingExample) -> str:
    return json.dumps(
        {"task": ex.task, "input": ex.input_text, "target": ex.target_text, "image_id": ex.image_id},
        ensure_ascii=False,
    )


def example_from_json(line: str) -> TrainingExample:
    obj = json.loads(line)
    return TrainingExample(
        task=str(obj["task"]),
        input_text=str(obj["input"]),
        target_text=str(obj["target"]),
        image_id=str(obj["image_id"]),
    )


def write_shards(
    examples: Sequence[TrainingExample],
    shard_size: int,
    out_dir: str | Path,
    config_hash: str = "",
    prefix: str = "examples",
) -> ShardManifest:
    """Write fixed-size JSONL shards plus a manifest with content hashes."""
    if shard_size < 1:
        raise ValueError("shard_size must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = ShardManifest(config_hash=config_hash)
    for shard_idx, start in enumerate(range(0, len(examples), shard_size)):
        chunk = examples[start : start + shard_size]
        name = f"{prefix}-{shard_idx:05d}.jsonl"
        payload = "".join(example_to_json(ex) + "\n" for ex in chunk).encode("utf-8")
        (out_dir / name).write_bytes(payload)
        manifest.shards.append(
            {"path": name, "count": len(chunk), "sha256": hashlib.sha256(payload).hexdigest()}
        )
    manifest.dump(out_dir / "manifest.json")
    return manifest


def read_shards(manifest_path: str | Path) -> list[TrainingExample]:
    """Read examples back, verifying each shard against its manifest hash."""
    manifest_path = Path(manifest_path)
    manifest = ShardManifest.load(manifest_path)
    base = manifest_path.parent
    out: list[TrainingExample] = []
    for entry in manifest.shards:
        payload = (base / entry["path"]).read_bytes()
        digest = hashlib.sha256(payload).hexdigest()
        if digest != entry["sha256"]:
            raise ManifestMismatchError(entry["path"], entry["sha256"], digest)
        lines = payload.decode("utf-8").splitlines()
        if len(lines) != entry["count"]:
            raise ManifestMismatchError(entry["path"], f"count {entry['count']}", f"count {len(lines)}")
        out.extend(example_from_json(line) for line in lines)
    return out
