"""Text embedding provider contract and the bundled deterministic embedder.

All vectors handed to downstream search are unit-normalized float32, so dot
product equals cosine similarity. The bundled embedder hashes character
trigrams into a fixed number of buckets with crc32 (stable across processes,
unlike builtin hash()) and needs no model weights.
"""
from __future__ import annotations

import zlib
from typing import Protocol, Sequence

import numpy as np


class ProviderError(RuntimeError):
    """An embedding provider failed for the text at ``index``."""

    def __init__(self, index: int, cause: str):
        super().__init__(f"embedding failed for text #{index}: {cause}")
        self.index = index
        self.cause = cause


class DimensionMismatchError(ValueError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"embedding dimension mismatch: expected {expected}, got {got}")
        self.expected = expected
        self.got = got


class EmbeddingProvider(Protocol):
    """Minimal contract: a fixed dimension and a batch embed call."""

    dimension: int

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


class HashedTrigramEmbedder:
    """Deterministic test embedder: hashed character trigrams, L2-normalized.

    Texts are padded with spaces so even the empty string yields at least
    one trigram (no zero vectors). Signed hashing spreads mass over both
    half-spaces, which keeps unrelated strings from all crowding cosine 1.
    """

    def __init__(self, dimension: int = 256):
        if dimension < 2:
            raise ValueError("dimension must be >= 2")
        self.dimension = dimension

    def _accumulate(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension, dtype=np.float64)
        padded = f"  {text} "
        for i in range(len(padded) - 2):
            h = zlib.crc32(padded[i : i + 3].encode("utf-8"))
            sign = 1.0 if (h >> 16) & 1 else -1.0
            vec[h % self.dimension] += sign
        return vec

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.empty((len(texts), self.dimension), dtype=np.float64)
        for i, text in enumerate(texts):
            out[i] = self._accumulate(text)
        return out


def embed_texts(provider: EmbeddingProvider, texts: Sequence[str]) -> np.ndarray:
    """Embed texts through ``provider`` and unit-normalize the result.

    Returns an (n, d) float32 matrix. Raises ProviderError when the provider
    fails outright or produces a non-finite or zero-norm row.
    """
    try:
        raw = np.asarray(provider.embed(texts), dtype=np.float64)
    except Exception as exc:  # provider is external code
        raise ProviderError(0, str(exc)) from exc
    if raw.ndim != 2 or raw.shape[0] != len(texts):
        raise ProviderError(0, f"provider returned shape {raw.shape} for {len(texts)} texts")
    if raw.shape[1] != provider.dimension:
        raise DimensionMismatchError(provider.dimension, raw.shape[1])
    bad = ~np.isfinite(raw).all(axis=1)
    if bad.any():
        raise ProviderError(int(np.argmax(bad)), "non-finite embedding values")
    norms = np.linalg.norm(raw, axis=1)
    zero = norms == 0.0
    if zero.any():
        raise ProviderError(int(np.argmax(zero)), "zero-norm embedding")
    return (raw / norms[:, None]).astype(np.float32)
