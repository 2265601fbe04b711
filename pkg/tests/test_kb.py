from __future__ import annotations

import json

import numpy as np
import pytest

from entikit.kb import (
    DuplicateNameError,
    EmptyNameError,
    load_vocabulary,
    load_vocabulary_file,
    normalize_name,
)


def test_normalize_examples():
    assert normalize_name("  Boeing 707 ") == "boeing 707"
    assert normalize_name("nematocampa resistaria") == "nematocampa resistaria"
    assert normalize_name("Dahlia 'Bishop of Llandaff'") == "dahlia 'bishop of llandaff'"


def test_normalize_empty_and_whitespace():
    assert normalize_name("") == ""
    assert normalize_name(" \t \n ") == ""
    assert normalize_name("a   b\tc") == "a b c"


def test_normalize_idempotent_random():
    rng = np.random.default_rng(0)
    alphabet = list("aAbB Zz09 'éÉüÅßİΩÅ  -_.")
    for _ in range(500):
        s = "".join(rng.choice(alphabet, size=rng.integers(0, 30)))
        once = normalize_name(s)
        assert normalize_name(once) == once


def test_load_assigns_positional_ids():
    vocab = load_vocabulary([("A", "x"), ("b", "y"), ("C c", "")])
    assert len(vocab) == 3
    assert [r.id for r in vocab.records] == [0, 1, 2]
    assert vocab[2].canonical_name == "c c"


def test_load_rejects_normalization_collision():
    with pytest.raises(DuplicateNameError) as exc:
        load_vocabulary([("A", ""), ("a", "")])
    assert exc.value.name == "a"


def test_load_rejects_empty_name():
    with pytest.raises(EmptyNameError) as exc:
        load_vocabulary([("ok", ""), ("   ", "")])
    assert exc.value.row == 1


def test_load_empty_stream():
    assert len(load_vocabulary([])) == 0


def test_lookup_round_trip_and_variants(tiny_vocab):
    for record in tiny_vocab.records:
        assert tiny_vocab.lookup(record.canonical_name) == record.id
    assert tiny_vocab.lookup("  GROSGRAIN ") == tiny_vocab.lookup("grosgrain")
    assert tiny_vocab.lookup("not an entity") is None
    assert len(tiny_vocab.records) == len(tiny_vocab.name_index)


def test_vocabulary_file_formats(tmp_path):
    jsonl = tmp_path / "vocab.jsonl"
    with jsonl.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"name": "Boeing 707", "summary": "jet"}) + "\n")
        fh.write(json.dumps({"name": "barn owl"}) + "\n")
    vocab = load_vocabulary_file(jsonl)
    assert vocab.names() == ["boeing 707", "barn owl"]
    assert vocab[0].summary == "jet"
    assert vocab[1].summary == ""

    tsv = tmp_path / "vocab.tsv"
    tsv.write_text("Boeing 707\tjet\nbarn owl\n", encoding="utf-8")
    vocab2 = load_vocabulary_file(tsv)
    assert vocab2.names() == vocab.names()
