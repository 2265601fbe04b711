"""Tokenizer contract plus the bundled byte-level tokenizer.

The byte tokenizer maps every UTF-8 byte to its own token id (0..255) with
eos at 256, so decode(encode(s)) == s holds for any string and the trie can
index arbitrary entity names without model weights.
"""
from __future__ import annotations

from typing import Protocol, Sequence

import numpy as np


class Tokenizer(Protocol):
    eos_id: int
    vocab_size: int  # includes eos

    def encode(self, text: str) -> np.ndarray: ...

    def decode(self, ids: Sequence[int]) -> str: ...


class ByteTokenizer:
    eos_id = 256
    vocab_size = 257

    def encode(self, text: str) -> np.ndarray:
        data = text.encode("utf-8")
        return np.frombuffer(data, dtype=np.uint8).astype(np.int32)

    def decode(self, ids: Sequence[int]) -> str:
        arr = np.asarray(ids, dtype=np.int64)
        arr = arr[arr != self.eos_id]
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ValueError("byte tokenizer ids must be in [0, 255] or eos")
        return arr.astype(np.uint8).tobytes().decode("utf-8")
