from __future__ import annotations

import numpy as np
import pytest

from entikit.embedding import (
    DimensionMismatchError,
    HashedTrigramEmbedder,
    ProviderError,
    embed_texts,
)


@pytest.fixture()
def embedder():
    return HashedTrigramEmbedder()


def test_identical_strings_identical_vectors(embedder):
    a = embed_texts(embedder, ["a golden retriever puppy", "a golden retriever puppy"])
    assert np.array_equal(a[0], a[1])
    b = embed_texts(embedder, ["a golden retriever puppy"])
    assert np.array_equal(a[0], b[0])


def test_unit_norm(embedder):
    rng = np.random.default_rng(1)
    texts = ["".join(rng.choice(list("abcdefgh "), size=rng.integers(0, 40))) for _ in range(100)]
    vecs = embed_texts(embedder, texts)
    norms = np.linalg.norm(vecs.astype(np.float64), axis=1)
    assert np.all(np.abs(norms - 1.0) < 1e-6)


def test_anagrams_differ(embedder):
    # trigram sets of "cat" and "cta" differ, so the bundled embedder must separate them
    vecs = embed_texts(embedder, ["cat", "cta"])
    assert not np.allclose(vecs[0], vecs[1])


def test_empty_string_embeds(embedder):
    vecs = embed_texts(embedder, [""])
    assert abs(np.linalg.norm(vecs[0]) - 1.0) < 1e-6


class _BadShapeProvider:
    dimension = 8

    def embed(self, texts):
        return np.zeros((len(texts), 4))


class _NaNProvider:
    dimension = 4

    def embed(self, texts):
        out = np.ones((len(texts), 4))
        out[-1, 0] = np.nan
        return out


class _ZeroProvider:
    dimension = 4

    def embed(self, texts):
        return np.zeros((len(texts), 4))


def test_provider_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        embed_texts(_BadShapeProvider(), ["a", "b"])


def test_provider_nan_reports_index():
    with pytest.raises(ProviderError) as exc:
        embed_texts(_NaNProvider(), ["a", "b", "c"])
    assert exc.value.index == 2


def test_provider_zero_norm():
    with pytest.raises(ProviderError):
        embed_texts(_ZeroProvider(), ["a"])
