import numpy as np
import pytest

from cdmkit import Concept, ConceptCatalog, Item, ItemBank


@pytest.fixture
def tiny_bank() -> ItemBank:
    """Three items over two concepts; q2 is multi-select."""
    catalog = ConceptCatalog(
        (Concept("c1", "loops"), Concept("c2", "recursion"))
    )
    items = (
        Item("q1", "pick A", "A", frozenset({"c1"})),
        Item("q2", "pick B and C", "BC", frozenset({"c1", "c2"})),
        Item("q3", "pick D", "D", frozenset({"c2"})),
    )
    return ItemBank(items=items, catalog=catalog)


def make_rng(seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed)
