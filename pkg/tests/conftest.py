"""
Shared pytest fixtures for privrec testing.

Small hand-built graphs are session-scoped; they are immutable so sharing
them across tests is safe. The wiki-Vote fixtures look for the public SNAP
file in ``$PRIVREC_WIKI_VOTE`` or ``tests/test_data/`` and skip when it is not
available.
"""

import os
from pathlib import Path

import pytest

from privrec.graph import Graph, read_graph
from .data_generators import (
    complete_graph,
    cycle_graph,
    path_graph,
    random_graph,
    star_graph,
    write_edge_list,
)

WIKI_VOTE_NAMES = ("wiki-Vote.txt.gz", "wiki-Vote.txt", "wiki-Vote.prgc")


@pytest.fixture(scope="session")
def test_data_dir():
    """Get the test data directory path."""
    return Path(__file__).parent / "test_data"


@pytest.fixture(scope="session")
def triangle():
    return complete_graph(3)


@pytest.fixture(scope="session")
def path3():
    """Path 0 - 1 - 2."""
    return path_graph(3)


@pytest.fixture(scope="session")
def star3():
    """Star with center 0 and leaves 1, 2, 3."""
    return star_graph(3)


@pytest.fixture(scope="session")
def k4():
    return complete_graph(4)


@pytest.fixture(scope="session")
def c5():
    return cycle_graph(5)


@pytest.fixture(scope="session")
def random_graphs():
    """Twenty seeded G(n, p) graphs of mixed size and density."""
    return [random_graph(8 + (seed % 13), 0.15 + 0.05 * (seed % 5), seed) for seed in range(20)]


@pytest.fixture(scope="session")
def small_edge_list(tmp_path_factory):
    """
    Edge list with comments, a reversed duplicate and a self-loop.

    Raw labels 10, 20, 30, 40, 50 map to ids 0..4. Folded edges:
    10-20, 10-30, 20-30, 30-40; node 50 appears only in a self-loop.
    """
    tmp_path = tmp_path_factory.mktemp("graphs")
    return write_edge_list(
        tmp_path / "small.txt",
        [(10, 20), (20, 10), (10, 30), (30, 20), (30, 40), (50, 50)],
        header=["Directed graph (each unordered pair of nodes is saved once)", "FromNodeId\tToNodeId"],
    )


@pytest.fixture(scope="session")
def wiki_vote_path(test_data_dir):
    """Path of the wiki-Vote edge list, or skip."""
    override = os.environ.get("PRIVREC_WIKI_VOTE")
    candidates = [Path(override)] if override else []
    candidates += [test_data_dir / name for name in WIKI_VOTE_NAMES]
    for candidate in candidates:
        if candidate.exists():
            return candidate
    pytest.skip("wiki-Vote dataset not available (set PRIVREC_WIKI_VOTE)")


@pytest.fixture(scope="session")
def wiki_vote(wiki_vote_path) -> Graph:
    print(f"\n📥 Loading wiki-Vote from {wiki_vote_path}...")
    return read_graph(wiki_vote_path)
