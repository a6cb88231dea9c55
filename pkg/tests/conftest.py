import random

import pytest

from dmrkit.ontology import Ontology, parse_ontology
from dmrkit.synth import fastfood_ontology, random_valid_graph


@pytest.fixture(scope="session")
def fastfood() -> Ontology:
    return fastfood_ontology()


@pytest.fixture()
def rng() -> random.Random:
    return random.Random(12345)


@pytest.fixture(scope="session")
def random_graphs(fastfood):
    """A reusable batch of ontology-valid graphs for property tests."""
    gen = random.Random(99)
    return [
        random_valid_graph(fastfood, gen, max_nodes=12, turn=i % 4, allow_refs=True)
        for i in range(200)
    ]
