import pytest

from src.synthetic import planted_community_graph, scalability_graph


def test_planted_graph_is_reproducible():
    assert planted_community_graph(n=20, T=2, seed=4) == planted_community_graph(n=20, T=2, seed=4)


def test_planted_graph_prefers_its_communities():
    g = planted_community_graph(n=40, T=3, communities=4, p_in=0.3, p_out=0.01, closure=0.0, seed=1)
    size = 10
    inside = sum(1 for e in g.edges if (e.src - 1) // size == (e.dst - 1) // size)
    assert inside > 0.8 * g.m


def test_planted_graph_needs_even_communities():
    with pytest.raises(ValueError):
        planted_community_graph(n=10, communities=4)


def test_scalability_graph_spreads_edges():
    g = scalability_graph(50, 3, 100, seed=2)
    assert g.m == 100
    assert g.snapshot_edge_counts() == [34, 33, 33]
    assert all(e.src != e.dst for e in g.edges)
