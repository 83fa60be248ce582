"""Initial-node sampling, k-radius temporal ego-graphs and the bipartite
computation graphs that merge a batch of ego-graphs for encoding."""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from tqdm.contrib.concurrent import thread_map

from src.errors import UsageError
from src.logging_config import logger
from src.rng import RandomStreams
from src.settings import SamplingSettings
from src.tgraph import TemporalEdge, TemporalGraph, TemporalNode

ChildRng = Callable[[int, TemporalNode], np.random.Generator]


@dataclass(frozen=True, eq=False)
class EgoGraph:
    """Sampled k-radius ego-graph.

    levels[d] holds the distinct nodes first reached at depth d (levels[0] is
    the center); children maps (depth, node) to the nodes sampled from it.
    A node may occur at several depths.
    """

    center: TemporalNode
    k: int
    levels: tuple[tuple[TemporalNode, ...], ...]
    children: dict[tuple[int, TemporalNode], tuple[TemporalNode, ...]] = field(repr=False)
    edges: frozenset[TemporalEdge] = field(default=frozenset(), repr=False)

    @property
    def nodes(self) -> frozenset[TemporalNode]:
        return frozenset(v for level in self.levels for v in level)

    def children_of(self, depth: int, node: TemporalNode) -> tuple[TemporalNode, ...]:
        return self.children.get((depth, node), ())

    def tree_edges(self) -> list[tuple[int, TemporalNode, TemporalNode]]:
        """(depth of parent, parent, child) for every sampled expansion."""
        return [(depth, parent, child) for (depth, parent), kids in self.children.items() for child in kids]

    def paths(self, length: int) -> list[tuple[TemporalNode, ...]]:
        """All child paths of `length` steps starting below the center."""
        paths: list[tuple[TemporalNode, ...]] = [()]
        for depth in range(length):
            extended = []
            for path in paths:
                tail = path[-1] if path else self.center
                extended.extend(path + (child,) for child in self.children_of(depth, tail))
            paths = extended
        return paths


def node_sampling(
    nodeset: Sequence[TemporalNode], threshold: Optional[int], rng: Optional[np.random.Generator]
) -> list[TemporalNode]:
    """Keeps the nodeset when it fits the threshold, otherwise draws `threshold`
    members uniformly with replacement and deduplicates them in draw order."""
    if threshold is None or len(nodeset) <= threshold:
        return list(nodeset)
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    picks = rng.integers(0, len(nodeset), size=threshold)
    return list(dict.fromkeys(nodeset[i] for i in picks.tolist()))


def induced_edges(g: TemporalGraph, nodes: frozenset[TemporalNode]) -> frozenset[TemporalEdge]:
    found = set()
    for v in nodes:
        for u in g.out_neighbors(v):
            if TemporalNode(u, v.t) in nodes:
                found.add(TemporalEdge(v.node, u, v.t))
    return frozenset(found)


def sample_ego_graph(
    g: TemporalGraph,
    v: TemporalNode,
    k: int,
    th: Optional[int],
    rng: Union[np.random.Generator, ChildRng],
    t_n: int = 1,
) -> EgoGraph:
    """Recursively samples up to th first-order temporal neighbors per node,
    k levels deep, and returns the induced ego-graph around v.

    A node already expanded at a given depth is not sampled again. `rng` is
    either one generator shared by every draw or a function returning the
    generator for (depth, node).
    """
    if k < 1:
        raise ValueError("ego radius k must be >= 1")
    levels: list[dict[TemporalNode, None]] = [{} for _ in range(k + 1)]
    levels[0][v] = None
    children: dict[tuple[int, TemporalNode], tuple[TemporalNode, ...]] = {}

    def expand(node: TemporalNode, depth: int):
        if depth == k or (depth, node) in children:
            return
        nodeset = g.temporal_neighborhood(node, 1, t_n)
        draws = rng
        if callable(rng):
            draws = rng(depth, node) if th is not None and len(nodeset) > th else None
        sampled = tuple(node_sampling(nodeset, th, draws))
        children[(depth, node)] = sampled
        for u in sampled:
            levels[depth + 1].setdefault(u)
            expand(u, depth + 1)

    expand(v, 0)
    frozen_levels = tuple(tuple(level) for level in levels)
    nodes = frozenset(u for level in frozen_levels for u in level)
    return EgoGraph(center=v, k=k, levels=frozen_levels, children=children, edges=induced_edges(g, nodes))


def initial_node_probabilities(g: TemporalGraph, strategy: str = "degree", t_n: int = 1) -> np.ndarray:
    """Sampling distribution over g.temporal_nodes().

    Degree-proportional by default; falls back to uniform when no temporal
    node has a neighbor.
    """
    size = g.n * g.T
    if strategy == "uniform":
        return np.full(size, 1.0 / size)
    if strategy != "degree":
        raise UsageError(f"unknown initial sampling strategy '{strategy}'")
    degrees = g.temporal_degrees(t_n)
    total = degrees.sum()
    if total == 0:
        logger.warning("All temporal degrees are zero, sampling initial nodes uniformly")
        return np.full(size, 1.0 / size)
    return degrees / total


def sample_initial_nodes(
    g: TemporalGraph,
    cfg: SamplingSettings,
    rng: np.random.Generator,
    probabilities: Optional[np.ndarray] = None,
) -> list[TemporalNode]:
    """Draws cfg.n_s temporal nodes with replacement."""
    if probabilities is None:
        probabilities = initial_node_probabilities(g, cfg.strategy, cfg.t_n)
    picks = rng.choice(g.n * g.T, size=cfg.n_s, replace=True, p=probabilities)
    # temporal_nodes() is timestamp-major
    return [TemporalNode(int(i) % g.n + 1, int(i) // g.n + 1) for i in picks]


def sample_egos(
    g: TemporalGraph,
    centers: Sequence[TemporalNode],
    cfg: SamplingSettings,
    streams: RandomStreams,
    stream: str,
    key: tuple[int, ...],
    threads: int = 1,
) -> list[EgoGraph]:
    """One ego-graph per center.

    The children of a node at a given depth are drawn from stream
    (*key, depth, node, t), so egos of one batch that reach the same node at
    the same depth sample the same children.
    """

    def child_rng(depth: int, node: TemporalNode) -> np.random.Generator:
        return streams.generator(stream, *key, depth, node.node, node.t)

    def sample(i: int) -> EgoGraph:
        return sample_ego_graph(g, centers[i], cfg.k, cfg.th, child_rng, cfg.t_n)

    if threads > 1 and len(centers) > 1:
        return thread_map(sample, range(len(centers)), max_workers=threads, disable=True)
    return [sample(i) for i in range(len(centers))]


@dataclass(frozen=True, eq=False)
class BipartiteLayer:
    """Message edges from S_l (sources) to S_{l-1} (targets), sorted by (dst, src)."""

    sources: tuple[TemporalNode, ...]
    targets: tuple[TemporalNode, ...]
    src_index: np.ndarray
    dst_index: np.ndarray

    @property
    def edges(self) -> list[tuple[TemporalNode, TemporalNode]]:
        return [(self.sources[s], self.targets[d]) for s, d in zip(self.src_index.tolist(), self.dst_index.tolist())]


@dataclass(frozen=True)
class MessagePlan:
    """Slot-level message edges for one attention layer.

    Targets are slots 0..num_targets-1; every target carries a self-loop.
    """

    num_inputs: int
    num_targets: int
    src_slots: np.ndarray
    dst_slots: np.ndarray


@dataclass(frozen=True, eq=False)
class BipartiteStack:
    k: int
    levels: tuple[tuple[TemporalNode, ...], ...]
    layers: tuple[BipartiteLayer, ...]

    @property
    def centers(self) -> tuple[TemporalNode, ...]:
        return self.levels[0]

    @property
    def offsets(self) -> list[int]:
        offsets = [0]
        for level in self.levels:
            offsets.append(offsets[-1] + len(level))
        return offsets

    @property
    def slot_nodes(self) -> list[TemporalNode]:
        """Every (level, node) slot, level-major; feature rows follow this order."""
        return [v for level in self.levels for v in level]

    def message_plan(self, j: int) -> MessagePlan:
        """Plan for attention layer j (1-based): updates levels 0..k-j from
        their children one level down plus their own previous state."""
        if not 1 <= j <= self.k:
            raise UsageError(f"attention layer {j} outside 1..{self.k}")
        offsets = self.offsets
        top = self.k - j
        src, dst = [], []
        for level in range(top + 1):
            own = np.arange(offsets[level], offsets[level + 1])
            src.append(own)
            dst.append(own)
            layer = self.layers[level]
            src.append(layer.src_index + offsets[level + 1])
            dst.append(layer.dst_index + offsets[level])
        src_slots = np.concatenate(src).astype(np.int64) if src else np.zeros(0, dtype=np.int64)
        dst_slots = np.concatenate(dst).astype(np.int64) if dst else np.zeros(0, dtype=np.int64)
        order = np.lexsort((src_slots, dst_slots))
        return MessagePlan(
            num_inputs=offsets[top + 2],
            num_targets=offsets[top + 1],
            src_slots=src_slots[order],
            dst_slots=dst_slots[order],
        )


def build_computation_graphs(egos: Sequence[EgoGraph], k: int) -> BipartiteStack:
    """Merges ego-graphs into k bipartite layers S_k -> ... -> S_0.

    Each S_l is the deduplicated union of the egos' depth-l nodes in ego order.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    for ego in egos:
        if ego.k != k:
            logger.error("Ego-graph of radius %d merged into a radius-%d stack", ego.k, k)
            raise UsageError(f"ego-graph radius {ego.k} does not match k={k}")
    centers = [ego.center for ego in egos]
    if len(set(centers)) != len(centers):
        raise UsageError("ego-graph centers in one stack must be distinct")

    levels: list[dict[TemporalNode, int]] = [{} for _ in range(k + 1)]
    for ego in egos:
        for depth, level in enumerate(ego.levels):
            for v in level:
                levels[depth].setdefault(v, len(levels[depth]))

    layers = []
    for depth in range(1, k + 1):
        pairs = set()
        for ego in egos:
            for (parent_depth, parent), kids in ego.children.items():
                if parent_depth != depth - 1:
                    continue
                for child in kids:
                    pairs.add((levels[depth - 1][parent], levels[depth][child]))
        ordered = sorted(pairs)
        layers.append(
            BipartiteLayer(
                sources=tuple(levels[depth]),
                targets=tuple(levels[depth - 1]),
                src_index=np.array([s for _, s in ordered], dtype=np.int64),
                dst_index=np.array([d for d, _ in ordered], dtype=np.int64),
            )
        )
    stack = BipartiteStack(k=k, levels=tuple(tuple(level) for level in levels), layers=tuple(layers))
    logger.debug("Built computation graphs: level sizes %s", [len(level) for level in stack.levels])
    return stack
