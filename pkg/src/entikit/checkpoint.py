"""Per-record, per-stage resume bookkeeping for the pipeline.

The checkpoint is an append-only JSONL file: a header pinning the stage and
config hash, then one processed image_id per line. Resuming under a
different config hash is refused outright, since mixed-config outputs would
be silently inconsistent.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


class CheckpointMismatchError(ValueError):
    def __init__(self, expected: str, found: str):
        super().__init__(
            f"checkpoint belongs to config {found}, refusing to resume with config {expected}"
        )


@dataclass
class Checkpoint:
    path: Path
    stage: str
    config_hash: str
    done: set[str] = field(default_factory=set)

    @classmethod
    def open(cls, path: str | Path, stage: str, config_hash: str, resume: bool) -> "Checkpoint":
        """Create a fresh checkpoint, or load one for resuming."""
        path = Path(path)
        if resume and path.exists():
            with path.open("r", encoding="utf-8") as fh:
                header = json.loads(fh.readline())
                if header.get("config_hash") != config_hash or header.get("stage") != stage:
                    raise CheckpointMismatchError(config_hash, str(header.get("config_hash")))
                done = {line.strip() for line in fh if line.strip()}
            return cls(path=path, stage=stage, config_hash=config_hash, done=done)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as fh:
            fh.write(json.dumps({"stage": stage, "config_hash": config_hash}) + "\n")
        return cls(path=path, stage=stage, config_hash=config_hash)

    def mark(self, image_id: str) -> None:
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(image_id + "\n")
        self.done.add(image_id)

    def __contains__(self, image_id: str) -> bool:
        return image_id in self.done
