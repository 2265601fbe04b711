from __future__ import annotations

from pathlib import Path

import pytest

from entikit.kb import EntityVocabulary, load_vocabulary

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture()
def tiny_vocab() -> EntityVocabulary:
    return load_vocabulary(
        [
            ("golden retriever", "A Scottish breed of gun dog."),
            ("grosgrain", "A ribbed ribbon fabric."),
            ("bronte baths", "An ocean pool carved into coastal rock."),
            ("boeing 707", "A narrow-body jet airliner."),
        ]
    )
