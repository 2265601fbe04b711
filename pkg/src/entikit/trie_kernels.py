"""Hot kernels behind the token trie: bulk construction and prefix walks.

Two interchangeable backends implement the same flat-array contract. The
numba backend JIT-compiles the inner loops and is the default whenever
numba imports; the numpy backend is a fully vectorized fallback selected
with ENTIKIT_BACKEND=numpy (or used automatically when numba is missing).
benchmarks/bench_trie.py compares the two.

Array contract (node 0 is the root):
  parent/token:  per node, its parent id and incoming token (-1 at root)
  terminal:      entity id reaching its end at this node, else -1
  CSR children:  child_start[i]..child_start[i+1] indexes child_tokens
                 (sorted per node) and child_nodes in lockstep

Construction consumes token sequences that are already sorted
lexicographically, so each name shares a prefix only with its predecessor
and nodes come out numbered in (name, depth) order — both backends produce
bit-identical arrays.
"""
from __future__ import annotations

import os
import warnings

import numpy as np

BACKEND_ENV = "ENTIKIT_BACKEND"

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    HAS_NUMBA = False


def resolve_backend(backend: str | None = None) -> str:
    """Pick 'numba' or 'numpy' from the argument, the env flag, or availability."""
    name = backend or os.environ.get(BACKEND_ENV, "") or ("numba" if HAS_NUMBA else "numpy")
    name = name.lower()
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r} (expected 'numba' or 'numpy')")
    if name == "numba" and not HAS_NUMBA:
        warnings.warn("numba not importable; falling back to numpy backend", RuntimeWarning)
        return "numpy"
    return name


# ---------------------------------------------------------------------------
# construction


def build_trie_arrays(
    flat: np.ndarray, offsets: np.ndarray, entity_ids: np.ndarray, backend: str | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Build (parent, token, terminal) node arrays from sorted token sequences.

    ``flat``/``offsets`` hold the concatenated int32 token sequences of the
    names in lexicographic order; ``entity_ids`` carries each sorted row's
    original entity id.
    """
    flat = np.ascontiguousarray(flat, dtype=np.int32)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    entity_ids = np.ascontiguousarray(entity_ids, dtype=np.int32)
    if resolve_backend(backend) == "numba":
        n_nodes, parent, token, terminal = _build_numba(flat, offsets, entity_ids)
        return parent[:n_nodes], token[:n_nodes], terminal[:n_nodes]
    return _build_numpy(flat, offsets, entity_ids)


def _build_numpy(flat, offsets, entity_ids):
    n = len(offsets) - 1
    if n == 0:
        return (
            np.full(1, -1, dtype=np.int32),
            np.full(1, -1, dtype=np.int32),
            np.full(1, -1, dtype=np.int32),
        )
    lengths = np.diff(offsets)
    width = int(lengths.max())
    col = np.arange(width, dtype=np.int64)
    valid = col[None, :] < lengths[:, None]
    padded = np.full((n, width), -1, dtype=np.int32)
    padded[valid] = flat

    lcp = np.zeros(n, dtype=np.int64)
    if n > 1:
        run = (padded[1:] == padded[:-1]) & (padded[1:] >= 0)
        lcp[1:] = np.cumprod(run, axis=1).sum(axis=1)

    new = valid & (col[None, :] >= lcp[:, None])
    ids = np.cumsum(new.ravel()).reshape(n, width)  # root is 0, first new node is 1
    node_at = np.maximum.accumulate(np.where(new, ids, 0), axis=0)

    n_nodes = int(ids[-1, -1]) + 1
    parent = np.full(n_nodes, -1, dtype=np.int32)
    token = np.full(n_nodes, -1, dtype=np.int32)
    terminal = np.full(n_nodes, -1, dtype=np.int32)

    rows, depths = np.nonzero(new)  # row-major: matches creation order
    nid = ids[rows, depths]
    token[nid] = padded[rows, depths]
    parent[nid] = np.where(depths == 0, 0, node_at[rows, np.maximum(depths - 1, 0)])
    terminal[node_at[np.arange(n), lengths - 1]] = entity_ids
    return parent, token, terminal


if HAS_NUMBA:

    @njit(cache=True)
    def _build_numba(flat, offsets, entity_ids):
        n = len(offsets) - 1
        cap = len(flat) + 1
        parent = np.full(cap, -1, dtype=np.int32)
        token = np.full(cap, -1, dtype=np.int32)
        terminal = np.full(cap, -1, dtype=np.int32)
        max_len = 0
        for r in range(n):
            length = offsets[r + 1] - offsets[r]
            if length > max_len:
                max_len = length
        path = np.zeros(max_len + 1, dtype=np.int32)
        n_nodes = 1
        prev_start = np.int64(0)
        prev_len = np.int64(0)
        for r in range(n):
            start = offsets[r]
            length = offsets[r + 1] - start
            bound = min(length, prev_len)
            lcp = np.int64(0)
            while lcp < bound and flat[start + lcp] == flat[prev_start + lcp]:
                lcp += 1
            for d in range(lcp, length):
                nid = n_nodes
                n_nodes += 1
                token[nid] = flat[start + d]
                parent[nid] = path[d - 1] if d > 0 else 0
                path[d] = nid
            terminal[path[length - 1]] = entity_ids[r]
            prev_start = start
            prev_len = length
        return n_nodes, parent, token, terminal

else:  # pragma: no cover

    def _build_numba(flat, offsets, entity_ids):
        raise RuntimeError("numba backend unavailable")


def to_csr(parent: np.ndarray, token: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Group nodes into per-parent child lists sorted by token id."""
    n_nodes = len(parent)
    child_start = np.zeros(n_nodes + 1, dtype=np.int64)
    if n_nodes <= 1:
        return child_start, np.empty(0, dtype=np.int32), np.empty(0, dtype=np.int32)
    edges = np.arange(1, n_nodes, dtype=np.int32)
    order = np.lexsort((token[1:], parent[1:]))
    child_tokens = np.ascontiguousarray(token[1:][order])
    child_nodes = np.ascontiguousarray(edges[order])
    counts = np.bincount(parent[1:], minlength=n_nodes)
    np.cumsum(counts, out=child_start[1:])
    return child_start, child_tokens, child_nodes


# ---------------------------------------------------------------------------
# prefix walks


def walk_nodes(
    child_start: np.ndarray,
    child_tokens: np.ndarray,
    child_nodes: np.ndarray,
    flat: np.ndarray,
    offsets: np.ndarray,
    backend: str | None = None,
) -> np.ndarray:
    """Resolve each prefix (flat/offsets layout) to its trie node, -1 off-trie."""
    flat = np.ascontiguousarray(flat, dtype=np.int32)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    if resolve_backend(backend) == "numba":
        return _walk_numba(child_start, child_tokens, child_nodes, flat, offsets)
    return _walk_numpy(child_start, child_tokens, child_nodes, flat, offsets)


def _walk_numpy(child_start, child_tokens, child_nodes, flat, offsets):
    m = len(offsets) - 1
    cur = np.zeros(m, dtype=np.int64)
    if m == 0:
        return cur
    plen = np.diff(offsets)
    n_edges = len(child_tokens)
    for t in range(int(plen.max()) if m else 0):
        idx = np.nonzero((plen > t) & (cur >= 0))[0]
        if idx.size == 0:
            break
        tok = flat[offsets[idx] + t]
        node = cur[idx]
        lo = child_start[node].copy()
        hi0 = child_start[node + 1]
        hi = hi0.copy()
        while True:  # vectorized lower_bound over each node's child slice
            open_ = lo < hi
            if not open_.any():
                break
            mid = (lo + hi) >> 1
            probe = child_tokens[np.where(open_, mid, 0)]
            go_right = open_ & (probe < tok)
            lo = np.where(go_right, mid + 1, lo)
            hi = np.where(open_ & ~go_right, mid, hi)
        found = (lo < hi0) & (child_tokens[np.minimum(lo, n_edges - 1)] == tok)
        cur[idx] = np.where(found, child_nodes[np.minimum(lo, n_edges - 1)], -1)
    return cur


if HAS_NUMBA:

    @njit(cache=True)
    def _step_numba(child_start, child_tokens, child_nodes, node, tok):
        lo = child_start[node]
        hi = child_start[node + 1]
        while lo < hi:
            mid = (lo + hi) >> 1
            if child_tokens[mid] < tok:
                lo = mid + 1
            else:
                hi = mid
        if lo < child_start[node + 1] and child_tokens[lo] == tok:
            return np.int64(child_nodes[lo])
        return np.int64(-1)

    @njit(cache=True)
    def _walk_numba(child_start, child_tokens, child_nodes, flat, offsets):
        m = len(offsets) - 1
        out = np.empty(m, dtype=np.int64)
        for i in range(m):
            node = np.int64(0)
            for p in range(offsets[i], offsets[i + 1]):
                node = _step_numba(child_start, child_tokens, child_nodes, node, flat[p])
                if node < 0:
                    break
            out[i] = node
        return out

else:  # pragma: no cover

    def _walk_numba(child_start, child_tokens, child_nodes, flat, offsets):
        raise RuntimeError("numba backend unavailable")


def step_node(
    child_start: np.ndarray,
    child_tokens: np.ndarray,
    child_nodes: np.ndarray,
    node: int,
    token: int,
) -> int:
    """Follow one edge from ``node``; -1 when no child carries ``token``."""
    lo = int(child_start[node])
    hi = int(child_start[node + 1])
    pos = lo + int(np.searchsorted(child_tokens[lo:hi], token))
    if pos < hi and child_tokens[pos] == token:
        return int(child_nodes[pos])
    return -1
