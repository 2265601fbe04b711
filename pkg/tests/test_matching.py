from __future__ import annotations

import numpy as np
import pytest

from entikit.embedding import DimensionMismatchError, HashedTrigramEmbedder, embed_texts
from entikit.kb import load_vocabulary
from entikit.matching import (
    CaptionedImage,
    build_candidate_assignments,
    knn,
    read_assignments,
    write_assignments,
)


def brute_force_knn(queries, corpus, k):
    """Independent oracle: per-pair dots, full sort with the documented tie rule."""
    out = []
    for q in queries:
        sims = [(float(np.dot(q, c)), i) for i, c in enumerate(corpus)]
        sims.sort(key=lambda t: (-t[0], t[1]))
        out.append([(i, s) for s, i in sims[: min(k, len(corpus))]])
    return out


def unit_rows(rng, n, d):
    m = rng.normal(size=(n, d))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def test_knn_basic_axis_vectors():
    corpus = np.array([[1.0, 0.0], [0.0, 1.0]])
    res = knn(np.array([[1.0, 0.0]]), corpus, k=1)
    assert res == [[(0, 1.0)]]


def test_knn_tie_breaks_to_lower_index():
    v = np.array([0.6, 0.8])
    corpus = np.stack([v, v])  # bitwise-equal rows -> exactly equal sims
    res = knn(np.array([[0.8, 0.6]]), corpus, k=2)
    assert [i for i, _ in res[0]] == [0, 1]


def test_knn_matches_brute_force_oracle():
    rng = np.random.default_rng(7)
    queries = unit_rows(rng, 50, 16)
    corpus = unit_rows(rng, 200, 16)
    got = knn(queries, corpus, k=5)
    want = brute_force_knn(queries, corpus, k=5)
    for g, w in zip(got, want):
        assert [i for i, _ in g] == [i for i, _ in w]
        for (_, gs), (_, ws) in zip(g, w):
            assert abs(gs - ws) < 1e-9


def test_knn_permutation_invariance():
    rng = np.random.default_rng(3)
    queries = unit_rows(rng, 5, 8)
    corpus = unit_rows(rng, 40, 8)
    perm = rng.permutation(40)
    base = knn(queries, corpus, k=4)
    permuted = knn(queries, corpus[perm], k=4)
    inverse = np.argsort(perm)
    for b, p in zip(base, permuted):
        assert sorted(i for i, _ in b) == sorted(int(perm[i]) for i, _ in p)
        assert {round(s, 12) for _, s in b} == {round(s, 12) for _, s in p}


def test_knn_k_larger_than_corpus():
    corpus = np.array([[1.0, 0.0]])
    res = knn(np.array([[1.0, 0.0], [0.0, 1.0]]), corpus, k=5)
    assert all(len(r) == 1 for r in res)


def test_knn_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        knn(np.zeros((1, 3)), np.zeros((2, 4)), k=1)


def test_single_entity_single_caption():
    vocab = load_vocabulary([("golden retriever", "")])
    corpus = [CaptionedImage("img-0", "a golden retriever puppy")]
    out = build_candidate_assignments(vocab, corpus, HashedTrigramEmbedder(), k=1)
    assert len(out) == 1
    assert out[0].candidate_entity_id == 0
    assert out[0].image_id == "img-0"


def test_conflicting_entities_resolved_by_similarity():
    # both entities retrieve the single caption; the closer one must win
    vocab = load_vocabulary([("zebra crossing", ""), ("golden retriever", "")])
    corpus = [CaptionedImage("img-0", "a golden retriever puppy")]
    embedder = HashedTrigramEmbedder()
    out = build_candidate_assignments(vocab, corpus, embedder, k=1)
    assert len(out) == 1
    sims = embed_texts(embedder, ["zebra crossing", "golden retriever"]) @ embed_texts(
        embedder, [corpus[0].caption]
    ).T
    assert out[0].candidate_entity_id == int(np.argmax(sims[:, 0]))


def test_assignments_match_exhaustive_script():
    """10 entities x 100 captions, k=3, vs an independently coded selection."""
    rng = np.random.default_rng(11)
    words = ["ash", "birch", "cedar", "dune", "elm", "fern", "gale", "holly", "iris", "jade"]
    names = [f"{w} tree" for w in words]
    vocab = load_vocabulary([(n, "") for n in names])
    captions = []
    for i in range(100):
        w = words[int(rng.integers(0, len(words)))]
        captions.append(f"caption {i} featuring a {w} by the {words[int(rng.integers(0, 10))]}")
    corpus = [CaptionedImage(f"img-{i:03d}", c) for i, c in enumerate(captions)]
    embedder = HashedTrigramEmbedder()
    got = build_candidate_assignments(vocab, corpus, embedder, k=3)

    # independent script: raw similarity matrix, per-entity top-3, then conflict rule
    name_vecs = embed_texts(embedder, names).astype(np.float64)
    cap_vecs = embed_texts(embedder, captions).astype(np.float64)
    sims = name_vecs @ cap_vecs.T
    claims: dict[int, tuple[float, int]] = {}
    for e in range(len(names)):
        order = sorted(range(100), key=lambda j: (-sims[e, j], j))[:3]
        for j in order:
            s = float(sims[e, j])
            if j not in claims or (s, -e) > (claims[j][0], -claims[j][1]):
                claims[j] = (s, e)
    want = [(f"img-{j:03d}", e) for j, (s, e) in sorted(claims.items())]
    assert [(a.image_id, a.candidate_entity_id) for a in got] == want

    image_ids = [a.image_id for a in got]
    assert len(image_ids) == len(set(image_ids))
    # emitted similarity equals the dot product of the unit vectors
    for a in got:
        j = int(a.image_id.split("-")[1])
        assert abs(a.similarity - sims[a.candidate_entity_id, j]) < 1e-6


def test_empty_corpus_rejected():
    vocab = load_vocabulary([("x", "")])
    with pytest.raises(ValueError):
        build_candidate_assignments(vocab, [], HashedTrigramEmbedder(), k=1)


def test_assignment_file_round_trip(tmp_path, tiny_vocab):
    embedder = HashedTrigramEmbedder()
    corpus = [
        CaptionedImage("img-0", "spools of grosgrain ribbon"),
        CaptionedImage("img-1", "a golden retriever puppy"),
    ]
    assignments = build_candidate_assignments(tiny_vocab, corpus, embedder, k=2)
    path = tmp_path / "assignments.jsonl"
    write_assignments(assignments, tiny_vocab, path)
    back = read_assignments(path, tiny_vocab)
    assert back == assignments
