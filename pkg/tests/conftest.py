import os
from pathlib import Path

import pytest
from hypothesis import settings

from ctqe.index import BM25Params, build_index, read_corpus
from ctqe.llm import MockProvider

settings.register_profile("ci", max_examples=200, deadline=None)
settings.register_profile("dev", max_examples=50, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "dev"))

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def corpus():
    return read_corpus(FIXTURES / "corpus.jsonl")


@pytest.fixture(scope="session")
def word_index(corpus):
    return build_index(corpus, "word")


@pytest.fixture(scope="session")
def subword_index(corpus):
    return build_index(corpus, "subword")


@pytest.fixture(scope="session")
def params():
    return BM25Params()


@pytest.fixture
def provider():
    return MockProvider.load(FIXTURES / "mock_script.json")


@pytest.fixture(scope="session")
def queries():
    out = []
    for line in (FIXTURES / "queries.tsv").read_text().splitlines():
        qid, text = line.split("\t")
        out.append((qid, text))
    return out


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
