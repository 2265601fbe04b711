"""Token trie over an entity vocabulary, driving constrained decoding.

Immutable after build; all state lives in flat numpy arrays (see
trie_kernels for the layout), which keeps traversal cache-friendly at
million-entity scale and makes serialization a straight buffer dump.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from entikit.kb import EntityVocabulary
from entikit.tokenizer import Tokenizer
from entikit.trie_kernels import build_trie_arrays, step_node, to_csr, walk_nodes

MAGIC = b"RWTR"
VERSION = 1


class TokenizerRoundTripError(ValueError):
    def __init__(self, entity: str):
        super().__init__(f"tokenizer does not round-trip entity name: {entity!r}")
        self.entity = entity


@dataclass
class TokenTrie:
    child_start: np.ndarray  # int64, len n_nodes + 1
    child_tokens: np.ndarray  # int32, len n_edges, sorted within each node
    child_nodes: np.ndarray  # int32, len n_edges
    terminal: np.ndarray  # int32, len n_nodes; entity id or -1
    eos_id: int
    n_entities: int

    @property
    def n_nodes(self) -> int:
        return len(self.terminal)

    @classmethod
    def build(
        cls,
        vocab: EntityVocabulary,
        tokenizer: Tokenizer,
        backend: str | None = None,
    ) -> "TokenTrie":
        """Tokenize every entity name and assemble the trie.

        Raises TokenizerRoundTripError if decode(encode(name)) != name for
        any entity; the trie would otherwise emit unreachable names.
        """
        names = vocab.names()
        encoded: list[np.ndarray] = []
        for name in names:
            ids = np.asarray(tokenizer.encode(name), dtype=np.int32)
            if ids.size == 0 or tokenizer.decode(ids) != name:
                raise TokenizerRoundTripError(name)
            encoded.append(ids)
        # big-endian bytes sort exactly like the token sequences (ids >= 0)
        keys = [seq.astype(">i4").tobytes() for seq in encoded]
        order = sorted(range(len(names)), key=keys.__getitem__)
        lengths = np.array([len(encoded[i]) for i in order], dtype=np.int64)
        offsets = np.zeros(len(order) + 1, dtype=np.int64)
        np.cumsum(lengths, out=offsets[1:])
        flat = (
            np.concatenate([encoded[i] for i in order])
            if order
            else np.empty(0, dtype=np.int32)
        )
        entity_ids = np.array(order, dtype=np.int32)
        parent, token, terminal = build_trie_arrays(flat, offsets, entity_ids, backend=backend)
        child_start, child_tokens, child_nodes = to_csr(parent, token)
        return cls(
            child_start=child_start,
            child_tokens=child_tokens,
            child_nodes=child_nodes,
            terminal=terminal,
            eos_id=tokenizer.eos_id,
            n_entities=len(names),
        )

    # -- traversal ----------------------------------------------------------

    def walk(self, prefix: Sequence[int]) -> int:
        """Node reached by ``prefix`` from the root, or -1 off-trie."""
        node = 0
        for tok in prefix:
            node = step_node(self.child_start, self.child_tokens, self.child_nodes, node, int(tok))
            if node < 0:
                return -1
        return node

    def walk_batch(self, prefixes: Sequence[Sequence[int]], backend: str | None = None) -> np.ndarray:
        lengths = np.array([len(p) for p in prefixes], dtype=np.int64)
        offsets = np.zeros(len(prefixes) + 1, dtype=np.int64)
        np.cumsum(lengths, out=offsets[1:])
        flat = (
            np.concatenate([np.asarray(p, dtype=np.int32) for p in prefixes])
            if len(prefixes) and offsets[-1] > 0
            else np.empty(0, dtype=np.int32)
        )
        return self.walk_nodes_flat(flat, offsets, backend=backend)

    def walk_nodes_flat(
        self, flat: np.ndarray, offsets: np.ndarray, backend: str | None = None
    ) -> np.ndarray:
        return walk_nodes(
            self.child_start, self.child_tokens, self.child_nodes, flat, offsets, backend=backend
        )

    def children(self, node: int) -> tuple[np.ndarray, np.ndarray]:
        """(tokens, child node ids) views for one node; tokens sorted."""
        lo = int(self.child_start[node])
        hi = int(self.child_start[node + 1])
        return self.child_tokens[lo:hi], self.child_nodes[lo:hi]

    def terminal_entity(self, node: int) -> int:
        """Entity id ending at ``node``, or -1."""
        return int(self.terminal[node]) if node >= 0 else -1

    def allowed_tokens(self, prefix: Sequence[int]) -> np.ndarray:
        """Token ids that may extend ``prefix``; eos included iff terminal.

        Off-trie prefixes yield an empty array. The result is a set; byte
        tokenizers happen to keep it sorted because eos is the largest id.
        """
        node = self.walk(prefix)
        if node < 0:
            return np.empty(0, dtype=np.int32)
        tokens, _ = self.children(node)
        if self.terminal[node] >= 0:
            return np.append(tokens, np.int32(self.eos_id))
        return tokens.copy()

    def iter_entities(self) -> Iterator[tuple[int, tuple[int, ...]]]:
        """Yield (entity_id, token path) for every terminal, DFS order."""
        stack: list[tuple[int, tuple[int, ...]]] = [(0, ())]
        while stack:
            node, path = stack.pop()
            entity = int(self.terminal[node])
            if entity >= 0:
                yield entity, path
            tokens, nodes = self.children(node)
            for tok, child in zip(tokens[::-1], nodes[::-1]):
                stack.append((int(child), path + (int(tok),)))

    # -- serialization ------------------------------------------------------

    def dump(self, path: str | Path) -> None:
        """Write the versioned binary trie file (magic RWTR)."""
        with Path(path).open("wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<H", VERSION))
            fh.write(
                struct.pack(
                    "<IQQQ",
                    self.eos_id,
                    self.n_nodes,
                    len(self.child_tokens),
                    self.n_entities,
                )
            )
            fh.write(self.child_start.astype("<i8").tobytes())
            fh.write(self.child_tokens.astype("<i4").tobytes())
            fh.write(self.child_nodes.astype("<i4").tobytes())
            fh.write(self.terminal.astype("<i4").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "TokenTrie":
        with Path(path).open("rb") as fh:
            buf = io.BufferedReader(fh)  # type: ignore[arg-type]
            magic = buf.read(4)
            if magic != MAGIC:
                raise ValueError(f"not a trie file (magic {magic!r})")
            (version,) = struct.unpack("<H", buf.read(2))
            if version != VERSION:
                raise ValueError(f"unsupported trie version {version}")
            eos_id, n_nodes, n_edges, n_entities = struct.unpack("<IQQQ", buf.read(28))
            child_start = np.frombuffer(buf.read(8 * (n_nodes + 1)), dtype="<i8").astype(np.int64)
            child_tokens = np.frombuffer(buf.read(4 * n_edges), dtype="<i4").astype(np.int32)
            child_nodes = np.frombuffer(buf.read(4 * n_edges), dtype="<i4").astype(np.int32)
            terminal = np.frombuffer(buf.read(4 * n_nodes), dtype="<i4").astype(np.int32)
        return cls(
            child_start=child_start,
            child_tokens=child_tokens,
            child_nodes=child_nodes,
            terminal=terminal,
            eos_id=int(eos_id),
            n_entities=int(n_entities),
        )
