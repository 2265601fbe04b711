"""Pipeline configuration with a canonical hash used in manifests.

Provider credentials never live here: the HTTP endpoint and token come
from the PROVIDER_URL / PROVIDER_TOKEN environment variables, so configs
and manifests stay free of secrets. All randomness in fixture generation
flows through the seed; the pipeline itself is randomness-free.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

from entikit.dataset import DEFAULT_ENTITY_PROMPT, DEFAULT_LEAK_THRESHOLD, DEFAULT_RATIONALE_PREFIX


@dataclass
class PipelineConfig:
    provider_type: str = "mock"  # mock | http
    provider_fixtures: str = ""  # fixture dir for the mock provider
    embedder: str = "trigram"
    embedding_dim: int = 256
    match_k: int = 5
    retries: int = 2
    max_in_flight: int = 8
    leak_threshold: float = DEFAULT_LEAK_THRESHOLD
    entity_prompt: str = DEFAULT_ENTITY_PROMPT
    rationale_prefix: str = DEFAULT_RATIONALE_PREFIX
    beam_size: int = 30
    max_len: int = 32
    shard_size: int = 1000
    seed: int = 0

    def validate(self) -> None:
        checks = [
            (self.provider_type in ("mock", "http"), "provider_type must be 'mock' or 'http'"),
            (self.embedder == "trigram", "embedder must be 'trigram'"),
            (self.embedding_dim >= 2, "embedding_dim must be >= 2"),
            (self.match_k >= 1, "match_k must be >= 1"),
            (self.retries >= 0, "retries must be >= 0"),
            (self.max_in_flight >= 1, "max_in_flight must be >= 1"),
            (0.0 <= self.leak_threshold <= 1.0, "leak_threshold must be in [0, 1]"),
            (self.beam_size >= 1, "beam_size must be >= 1"),
            (self.max_len >= 1, "max_len must be >= 1"),
            (self.shard_size >= 1, "shard_size must be >= 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ValueError(message)

    def canonical_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()[:16]

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        with Path(path).open("r", encoding="utf-8") as fh:
            obj = json.load(fh)
        known = {f for f in cls.__dataclass_fields__}  # noqa: C416 - explicit set
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        config = cls(**obj)
        config.validate()
        return config
