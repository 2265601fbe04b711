"""Beam search over token log-probabilities with optional trie constraints.

Three modes: free-running generation, generation filtered against the
vocabulary at the end (cheap, used for very large entity sets), and full
per-step trie masking (every emitted sequence is a vocabulary entity by
construction). Scores are length-unnormalized sums of token log-probs; a
length-penalty knob exists but defaults off. All ties break by
lexicographic token sequence so runs are reproducible and comparable with
the exhaustive-enumeration oracle used in tests.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Protocol, Sequence

import numpy as np

from entikit.kb import EntityVocabulary
from entikit.objective import log_softmax
from entikit.tokenizer import Tokenizer
from entikit.trie import TokenTrie


class DecodeMode(str, Enum):
    UNCONSTRAINED = "unconstrained"
    LAST_STEP_FILTER = "last_step_filter"
    FULL_TRIE = "full_trie"


class ZeroBeamError(ValueError):
    def __init__(self) -> None:
        super().__init__("beam_size must be >= 1")


class MissingTrieError(ValueError):
    def __init__(self) -> None:
        super().__init__("full-trie decoding requires a trie")


class MissingVocabError(ValueError):
    def __init__(self) -> None:
        super().__init__("last-step filtering requires a vocabulary")


class Scorer(Protocol):
    """Next-token log-probability table; rows normalized (logsumexp == 0)."""

    def next_logprobs(self, context, prefix: tuple[int, ...]) -> np.ndarray: ...


class HashedScorer:
    """Deterministic pseudo-random scorer for tests and decode fixtures.

    Each (seed, context, prefix) triple hashes to an RNG seed, so rows are
    stable across processes without storing any table.
    """

    def __init__(self, vocab_size: int, seed: int = 0):
        self.vocab_size = vocab_size
        self.seed = seed

    def next_logprobs(self, context, prefix: tuple[int, ...]) -> np.ndarray:
        key = f"{self.seed}|{context}|{','.join(map(str, prefix))}"
        digest = hashlib.sha256(key.encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        return log_softmax(rng.standard_normal(self.vocab_size) * 2.0)


class TableScorer:
    """Scorer backed by an explicit prefix -> logprob-row table.

    Prefixes missing from the table score uniformly; oracle tests fill in
    exactly the rows they need.
    """

    def __init__(self, vocab_size: int, rows: dict[tuple[int, ...], np.ndarray]):
        self.vocab_size = vocab_size
        self.rows = {k: np.asarray(v, dtype=np.float64) for k, v in rows.items()}
        self._uniform = np.full(vocab_size, -np.log(vocab_size), dtype=np.float64)

    def next_logprobs(self, context, prefix: tuple[int, ...]) -> np.ndarray:
        return self.rows.get(tuple(prefix), self._uniform)


@dataclass(frozen=True)
class BeamHypothesis:
    tokens: tuple[int, ...]
    logprob: float
    finished: bool


@dataclass(frozen=True)
class DecodedCandidate:
    text: str
    logprob: float
    tokens: tuple[int, ...]
    entity_id: Optional[int] = None


def _select_top(scores: np.ndarray, beam_size: int) -> np.ndarray:
    """Flat indices of the top candidates, ties in row-major (hyp, token) order."""
    flat = scores.ravel()
    finite = flat > -np.inf
    n_finite = int(finite.sum())
    if n_finite == 0:
        return np.empty(0, dtype=np.int64)
    if n_finite <= beam_size:
        return np.nonzero(finite)[0]
    kth = np.partition(flat, flat.size - beam_size)[flat.size - beam_size]
    definite = np.nonzero(flat > kth)[0]
    tied = np.nonzero(flat == kth)[0]
    return np.concatenate([definite, tied[: beam_size - definite.size]])


def beam_search(
    scorer: Scorer,
    context,
    mode: DecodeMode = DecodeMode.UNCONSTRAINED,
    beam_size: int = 30,
    max_len: int = 32,
    trie: Optional[TokenTrie] = None,
    vocab: Optional[EntityVocabulary] = None,
    tokenizer: Optional[Tokenizer] = None,
    length_penalty: float = 0.0,
) -> list[DecodedCandidate]:
    """Length-unnormalized beam search; returns up to beam_size finished hypotheses.

    A hypothesis finishes by emitting eos (full-trie mode only allows eos at
    terminal nodes); anything still unfinished after max_len tokens is
    discarded. Ranking is by logprob descending, ties by lexicographic token
    sequence. In last-step-filter mode finished texts that are not vocabulary
    entities are dropped after ranking, so the result can be empty.
    """
    mode = DecodeMode(mode)
    if beam_size < 1:
        raise ZeroBeamError()
    if tokenizer is None:
        raise ValueError("a tokenizer is required")
    if mode is DecodeMode.FULL_TRIE and trie is None:
        raise MissingTrieError()
    if mode is DecodeMode.LAST_STEP_FILTER and vocab is None:
        raise MissingVocabError()

    eos = tokenizer.eos_id
    n_tokens = tokenizer.vocab_size

    # active hypotheses stay sorted lexicographically by token sequence, so
    # row-major order over (hypothesis, token) is exactly the tie-break order
    active_tokens: list[tuple[int, ...]] = [()]
    active_logprob = np.zeros(1, dtype=np.float64)
    active_nodes = [0]  # trie nodes, full-trie mode only
    finished: list[BeamHypothesis] = []

    for _ in range(max_len):
        if not active_tokens:
            break
        rows = np.stack(
            [np.asarray(scorer.next_logprobs(context, t), dtype=np.float64) for t in active_tokens]
        )
        if rows.shape[1] != n_tokens:
            raise ValueError(f"scorer row has {rows.shape[1]} entries, expected {n_tokens}")
        scores = active_logprob[:, None] + rows

        if mode is DecodeMode.FULL_TRIE:
            assert trie is not None
            mask = np.full_like(scores, -np.inf)
            eos_allowed = np.zeros(len(active_tokens), dtype=bool)
            for i, node in enumerate(active_nodes):
                toks, _ = trie.children(node)
                mask[i, toks] = 0.0
                if trie.terminal[node] >= 0:
                    eos_allowed[i] = True
                    mask[i, eos] = 0.0
            scores = scores + mask
        else:
            eos_allowed = np.ones(len(active_tokens), dtype=bool)

        # harvest eos continuations into the finished pool, then drop eos
        for i in np.nonzero(eos_allowed)[0]:
            if scores[i, eos] > -np.inf:
                finished.append(
                    BeamHypothesis(
                        tokens=active_tokens[i] + (eos,),
                        logprob=float(scores[i, eos]),
                        finished=True,
                    )
                )
        scores[:, eos] = -np.inf

        chosen = _select_top(scores, beam_size)
        order = np.lexsort(
            (chosen % n_tokens, chosen // n_tokens, -scores.ravel()[chosen])
        )
        chosen = chosen[order]
        next_tokens: list[tuple[int, ...]] = []
        next_nodes: list[int] = []
        next_logprob = np.empty(chosen.size, dtype=np.float64)
        for j, flat_idx in enumerate(chosen):
            hyp_i, tok = divmod(int(flat_idx), n_tokens)
            next_tokens.append(active_tokens[hyp_i] + (tok,))
            next_logprob[j] = scores[hyp_i, tok]
            if mode is DecodeMode.FULL_TRIE:
                assert trie is not None
                toks, child_nodes = trie.children(active_nodes[hyp_i])
                pos = int(np.searchsorted(toks, tok))
                next_nodes.append(int(child_nodes[pos]))
        active_tokens = next_tokens
        active_logprob = next_logprob
        active_nodes = next_nodes if mode is DecodeMode.FULL_TRIE else [0] * len(next_tokens)

    def rank_key(h: BeamHypothesis):
        score = h.logprob
        if length_penalty > 0.0:
            score = score / (len(h.tokens) ** length_penalty)
        return (-score, h.tokens)

    ranked = sorted(finished, key=rank_key)[:beam_size]

    results: list[DecodedCandidate] = []
    for h in ranked:
        text = tokenizer.decode(h.tokens)
        if mode is DecodeMode.FULL_TRIE:
            assert trie is not None
            entity_id = trie.terminal_entity(trie.walk(h.tokens[:-1]))
            results.append(
                DecodedCandidate(text=text, logprob=h.logprob, tokens=h.tokens, entity_id=entity_id)
            )
        elif mode is DecodeMode.LAST_STEP_FILTER:
            assert vocab is not None
            entity_id = vocab.lookup(text)
            if entity_id is None:
                continue
            results.append(
                DecodedCandidate(
                    text=vocab[entity_id].canonical_name,
                    logprob=h.logprob,
                    tokens=h.tokens,
                    entity_id=entity_id,
                )
            )
        else:
            results.append(DecodedCandidate(text=text, logprob=h.logprob, tokens=h.tokens))
    return results
