"""Synthetic temporal graphs for desk-scale quality checks and scalability runs."""

import networkx as nx
import numpy as np

from src.logging_config import logger
from src.tgraph import TemporalGraph


def planted_community_graph(
    n: int = 100,
    T: int = 5,
    communities: int = 4,
    p_in: float = 0.15,
    p_out: float = 0.005,
    closure: float = 0.3,
    seed: int = 0,
) -> TemporalGraph:
    """Directed planted-partition snapshots with triangle closure.

    Every snapshot draws fresh intra/inter community edges; a `closure`
    fraction of the snapshot's directed 2-paths u->v->w is then closed by w->u.
    """
    if n % communities:
        raise ValueError("n must be divisible by the number of communities")
    rng = np.random.default_rng(seed)
    edges = []
    for t in range(1, T + 1):
        snapshot = nx.planted_partition_graph(
            communities, n // communities, p_in, p_out, seed=int(rng.integers(2**31)), directed=True
        )
        arcs = set(snapshot.edges())
        paths = sorted(
            (u, v, w) for u, v in arcs for w in snapshot.successors(v) if w != u and (w, u) not in arcs
        )
        if paths:
            picks = rng.choice(len(paths), size=int(closure * len(paths)), replace=False)
            arcs.update((paths[i][2], paths[i][0]) for i in picks.tolist())
        edges.extend((u + 1, v + 1, t) for u, v in sorted(arcs))
    graph = TemporalGraph(n, T, edges)
    logger.info("Built planted-community graph: n=%d, T=%d, m=%d", n, T, graph.m)
    return graph


def scalability_graph(n: int, T: int, m: int, seed: int = 0) -> TemporalGraph:
    """m uniform random directed edges (no self-loops) spread evenly over T snapshots."""
    rng = np.random.default_rng(seed)
    per_snapshot = np.full(T, m // T)
    per_snapshot[: m % T] += 1
    timestamps = np.repeat(np.arange(1, T + 1), per_snapshot)
    src = rng.integers(1, n + 1, size=m)
    offset = rng.integers(1, n, size=m)
    dst = (src - 1 + offset) % n + 1
    graph = TemporalGraph(n, T, np.column_stack([src, dst, timestamps]).tolist())
    logger.info("Built scalability graph: n=%d, T=%d, m=%d", n, T, graph.m)
    return graph
