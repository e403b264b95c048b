import numpy as np
import pytest
from hypothesis import strategies as st

from gnnregime.data import generate_synthetic
from gnnregime.graph import from_edge_list, normalize_with_self_loops


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def pair_adj():
    # two nodes joined by a unit edge: normalized adjacency is all 0.5
    return normalize_with_self_loops(from_edge_list([(0, 1)], 2))


@pytest.fixture(scope="session")
def separable():
    return generate_synthetic(60, 3, 12, 0.08, 0.005, 10.0, rng=0)


@st.composite
def edge_lists(draw, max_nodes=20, weighted=True):
    n = draw(st.integers(1, max_nodes))
    idx = st.integers(0, n - 1)
    weight = st.floats(0.1, 5.0) if weighted else st.just(1.0)
    edges = draw(st.lists(st.tuples(idx, idx, weight), max_size=3 * n))
    return edges, n


# one line per acceptance criterion, repeated after the test summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
