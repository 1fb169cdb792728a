import numpy as np
import pytest

from transbound.data import TripleStore

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion; printed at the end of the session."""

    def record(name, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def toy_store():
    # 4 entities, 2 relations
    train = [(0, 0, 1), (1, 0, 2), (2, 1, 3), (3, 1, 0)]
    valid = [(0, 0, 2)]
    test = [(1, 1, 3)]
    return TripleStore(train, valid, test, 4, 2)


def random_store(rng, n_entities=20, n_relations=3, n_triples=60, n_valid=10):
    triples = set()
    while len(triples) < n_triples:
        triples.add((int(rng.integers(n_entities)), int(rng.integers(n_relations)), int(rng.integers(n_entities))))
    triples = sorted(triples)
    order = rng.permutation(len(triples))
    triples = [triples[i] for i in order]
    return TripleStore(triples[n_valid:], triples[:n_valid // 2], triples[n_valid // 2:n_valid], n_entities, n_relations)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
