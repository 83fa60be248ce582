import numpy as np
import pytest

from src.errors import UsageError
from src.rng import RandomStreams
from src.sampler import (
    EgoGraph,
    build_computation_graphs,
    initial_node_probabilities,
    node_sampling,
    sample_ego_graph,
    sample_egos,
    sample_initial_nodes,
)
from src.settings import SamplingSettings
from src.tgraph import TemporalEdge, TemporalGraph, TemporalNode


def nodes(*pairs):
    return [TemporalNode(v, t) for v, t in pairs]


@pytest.fixture
def star():
    # center 1 with leaves 2, 3, 4
    return TemporalGraph(4, 1, [(1, 2, 1), (1, 3, 1), (1, 4, 1)])


@pytest.fixture
def degree_graph():
    # temporal degrees at t=1 with t_n=0: node 1 -> 2, node 2 -> 1, node 3 -> 1
    return TemporalGraph(3, 1, [(1, 2, 1), (1, 3, 1)])


def test_node_sampling_keeps_small_sets():
    rng = np.random.default_rng(0)
    members = nodes((1, 1), (2, 1), (3, 1))
    assert node_sampling(members, 5, rng) == members


def test_node_sampling_truncates():
    rng = np.random.default_rng(0)
    members = nodes(*[(v, 1) for v in range(1, 11)])
    picked = node_sampling(members, 2, rng)
    assert 1 <= len(picked) <= 2
    assert len(set(picked)) == len(picked)
    assert set(picked) <= set(members)


def test_node_sampling_empty():
    assert node_sampling([], 3, np.random.default_rng(0)) == []


def test_ego_of_star_without_truncation(star):
    ego = sample_ego_graph(star, TemporalNode(1, 1), 1, 10, np.random.default_rng(0), t_n=0)
    assert ego.nodes == set(nodes((1, 1), (2, 1), (3, 1), (4, 1)))
    assert ego.edges == {TemporalEdge(1, 2, 1), TemporalEdge(1, 3, 1), TemporalEdge(1, 4, 1)}


def test_ego_of_star_with_threshold_one(star):
    ego = sample_ego_graph(star, TemporalNode(1, 1), 1, 1, np.random.default_rng(4), t_n=0)
    assert len(ego.nodes) == 2
    assert TemporalNode(1, 1) in ego.nodes


def test_ego_of_isolated_center():
    g = TemporalGraph(3, 1, [(1, 2, 1)])
    ego = sample_ego_graph(g, TemporalNode(3, 1), 2, 5, np.random.default_rng(0))
    assert ego.nodes == {TemporalNode(3, 1)}
    assert ego.edges == frozenset()


def _random_graph(seed, n=7, T=3, m=16):
    rng = np.random.default_rng(seed)
    edges = [(int(rng.integers(1, n + 1)), int(rng.integers(1, n + 1)), int(rng.integers(1, T + 1))) for _ in range(m)]
    return TemporalGraph(n, T, edges)


def test_ego_respects_radius_and_branching():
    for seed in range(10):
        g = _random_graph(seed)
        for v in g.temporal_nodes():
            ego = sample_ego_graph(g, v, 2, 2, np.random.default_rng(seed), t_n=1)
            assert ego.center in ego.nodes
            assert len(ego.levels) == 3
            assert all(len(kids) <= 2 for kids in ego.children.values())
            assert all(depth < 2 for depth, _, _ in ego.tree_edges())
            reached = {ego.center}
            for depth in range(2):
                reached |= {child for d, _, child in ego.tree_edges() if d == depth}
            assert reached == set(ego.nodes)


def test_untruncated_ego_matches_neighborhood():
    for seed in range(10):
        g = _random_graph(seed)
        for v in g.temporal_nodes():
            for k in (1, 2):
                ego = sample_ego_graph(g, v, k, None, np.random.default_rng(0), t_n=g.T)
                exact = set(g.temporal_neighborhood(v, k, g.T))
                assert {u for u in ego.nodes if u.node != v.node} == exact


def test_ego_sampling_deterministic(community_graph):
    v = TemporalNode(1, 2)
    first = sample_ego_graph(community_graph, v, 2, 3, RandomStreams(1).generator("sampling", 0, 0, 0))
    again = sample_ego_graph(community_graph, v, 2, 3, RandomStreams(1).generator("sampling", 0, 0, 0))
    assert first.levels == again.levels
    assert first.children == again.children


def test_initial_probabilities_follow_degrees(degree_graph):
    p = initial_node_probabilities(degree_graph, "degree", t_n=0)
    assert np.allclose(p, [0.5, 0.25, 0.25])


def test_initial_probabilities_uniform_when_degrees_equal():
    g = TemporalGraph(2, 1, [(1, 2, 1)])
    assert np.allclose(initial_node_probabilities(g, "degree", t_n=0), [0.5, 0.5])


def test_initial_probabilities_fall_back_to_uniform(caplog):
    g = TemporalGraph(2, 1, [(1, 1, 1)])
    p = initial_node_probabilities(g, "degree", t_n=0)
    assert np.allclose(p, [0.5, 0.5])
    assert "uniformly" in caplog.text


def test_initial_draws_match_degree_distribution(degree_graph):
    cfg = SamplingSettings(n_s=100_000, t_n=0)
    draws = sample_initial_nodes(degree_graph, cfg, np.random.default_rng(2024))
    assert len(draws) == 100_000
    expected = {TemporalNode(1, 1): 0.5, TemporalNode(2, 1): 0.25, TemporalNode(3, 1): 0.25}
    for node, p in expected.items():
        observed = sum(1 for d in draws if d == node)
        sigma = np.sqrt(cfg.n_s * p * (1 - p))
        assert abs(observed - cfg.n_s * p) <= 3 * sigma


def test_uniform_strategy(degree_graph):
    cfg = SamplingSettings(n_s=10, strategy="uniform", t_n=0)
    draws = sample_initial_nodes(degree_graph, cfg, np.random.default_rng(0))
    assert len(draws) == 10
    assert np.allclose(initial_node_probabilities(degree_graph, "uniform"), [1 / 3] * 3)


def chain_ego():
    a, b, c = nodes((1, 1), (2, 1), (3, 1))
    return EgoGraph(
        center=a,
        k=2,
        levels=((a,), (b,), (c,)),
        children={(0, a): (b,), (1, b): (c,)},
    )


def test_chain_stack():
    a, b, c = nodes((1, 1), (2, 1), (3, 1))
    stack = build_computation_graphs([chain_ego()], 2)
    assert stack.levels == ((a,), (b,), (c,))
    assert stack.layers[0].edges == [(b, a)]
    assert stack.layers[1].edges == [(c, b)]
    plan = stack.message_plan(1)
    # slots: a=0, b=1, c=2; layer 1 updates a and b
    assert plan.num_targets == 2
    assert sorted(zip(plan.src_slots.tolist(), plan.dst_slots.tolist())) == [(0, 0), (1, 0), (1, 1), (2, 1)]
    final = stack.message_plan(2)
    assert final.num_targets == 1
    assert sorted(zip(final.src_slots.tolist(), final.dst_slots.tolist())) == [(0, 0), (1, 0)]


def test_shared_neighbor_appears_once():
    a, b, w = nodes((1, 1), (2, 1), (3, 1))
    egos = [
        EgoGraph(center=a, k=1, levels=((a,), (w,)), children={(0, a): (w,)}),
        EgoGraph(center=b, k=1, levels=((b,), (w,)), children={(0, b): (w,)}),
    ]
    stack = build_computation_graphs(egos, 1)
    assert stack.levels[1] == (w,)
    assert stack.layers[0].edges == [(w, a), (w, b)]


def test_isolated_center_stack():
    v = TemporalNode(1, 1)
    ego = EgoGraph(center=v, k=2, levels=((v,), (), ()), children={(0, v): ()})
    stack = build_computation_graphs([ego], 2)
    assert stack.levels == ((v,), (), ())
    for j in (1, 2):
        plan = stack.message_plan(j)
        assert plan.num_targets == 1
        assert plan.src_slots.tolist() == [0] and plan.dst_slots.tolist() == [0]


def test_empty_batch():
    stack = build_computation_graphs([], 2)
    assert stack.centers == ()
    assert stack.message_plan(1).num_targets == 0


def test_stack_endpoints_lie_in_declared_levels(community_graph):
    rng = np.random.default_rng(0)
    centers = nodes((1, 1), (2, 1), (5, 2), (9, 3))
    egos = [sample_ego_graph(community_graph, v, 2, 3, rng) for v in centers]
    stack = build_computation_graphs(egos, 2)
    assert stack.centers == tuple(centers)
    for depth, layer in enumerate(stack.layers, start=1):
        assert layer.sources == stack.levels[depth]
        assert layer.targets == stack.levels[depth - 1]
        for src, dst in layer.edges:
            assert src in stack.levels[depth] and dst in stack.levels[depth - 1]
    for depth, level in enumerate(stack.levels):
        assert len(set(level)) == len(level)


def test_stack_rejects_mismatched_radius():
    with pytest.raises(UsageError):
        build_computation_graphs([chain_ego()], 3)


def test_stack_rejects_duplicate_centers():
    with pytest.raises(UsageError):
        build_computation_graphs([chain_ego(), chain_ego()], 2)


def test_batch_egos_share_child_draws(community_graph):
    cfg = SamplingSettings(k=2, th=2, n_s=12)
    centers = community_graph.temporal_nodes()[:12]
    egos = sample_egos(community_graph, centers, cfg, RandomStreams(3), "sampling", (0, 0))
    seen = {}
    for ego in egos:
        for slot, kids in ego.children.items():
            assert seen.setdefault(slot, kids) == kids
    alone = sample_egos(community_graph, centers[5:6], cfg, RandomStreams(3), "sampling", (0, 0))[0]
    assert alone.children == egos[5].children
