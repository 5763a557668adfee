import pytest

from helpers import build_test_corpus
from molpret.molgraph import parse_smiles


@pytest.fixture(scope="session")
def corpus_smiles_500():
    return build_test_corpus(seed=123, size=500)


@pytest.fixture(scope="session")
def corpus_500(corpus_smiles_500):
    return [parse_smiles(s) for s in corpus_smiles_500]


@pytest.fixture(scope="session")
def corpus_60():
    return [parse_smiles(s) for s in build_test_corpus(seed=7, size=60)]
