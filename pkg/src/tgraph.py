"""Temporal graph data model, edge-list ingestion, cumulative snapshots and
temporal neighborhood queries."""

import functools
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Optional, TextIO, Union

import networkx as nx
import numpy as np

from src.errors import ConfigError, EmptyInputError, ParseError, RangeError, UsageError
from src.logging_config import logger

DEFAULT_TIME_WINDOW = 1
NEIGHBORHOOD_MEMO_SIZE = 1 << 18


class TemporalNode(NamedTuple):
    node: int
    t: int


class TemporalEdge(NamedTuple):
    src: int
    dst: int
    t: int


@dataclass(frozen=True)
class StaticSnapshot:
    """Cumulative static view of a temporal graph up to one timestamp."""

    nodes: frozenset[int]
    directed: tuple[TemporalEdge, ...]
    simple: frozenset[tuple[int, int]]

    @property
    def n(self) -> int:
        return len(self.nodes)

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(sorted(self.nodes))
        graph.add_edges_from(sorted(self.simple))
        return graph


class TemporalGraph:
    """Immutable temporal multigraph over nodes 1..n and timestamps 1..T.

    Edges are stored sorted by (t, src, dst); parallel edges are kept. The
    only mutable state is a bounded, thread-safe memo of neighborhood queries.
    """

    def __init__(self, n: int, T: int, edges: Iterable[tuple[int, int, int]]):
        if n < 1 or T < 1:
            raise ValueError("a temporal graph needs n >= 1 and T >= 1")
        array = np.asarray(list(edges), dtype=np.int64).reshape(-1, 3)
        if len(array):
            src, dst, t = array[:, 0], array[:, 1], array[:, 2]
            if src.min() < 1 or dst.min() < 1 or max(src.max(), dst.max()) > n:
                raise RangeError(f"edge endpoint outside 1..{n}")
            if t.min() < 1 or t.max() > T:
                raise RangeError(f"edge timestamp outside 1..{T}")
            order = np.lexsort((dst, src, t))
            array = array[order]
        self.n = int(n)
        self.T = int(T)
        self._src = array[:, 0].copy()
        self._dst = array[:, 1].copy()
        self._t = array[:, 2].copy()
        for column in (self._src, self._dst, self._t):
            column.setflags(write=False)
        self._offsets = np.searchsorted(self._t, np.arange(1, T + 2), side="left")
        self._adjacency, self._out, self._active = self._index()
        self._neighborhood_memo = functools.lru_cache(maxsize=NEIGHBORHOOD_MEMO_SIZE)(self._neighborhood)

    def _index(self):
        adjacency: dict[TemporalNode, set[int]] = defaultdict(set)
        out: dict[TemporalNode, list[int]] = defaultdict(list)
        active: dict[int, set[int]] = defaultdict(set)
        for s, d, t in zip(self._src.tolist(), self._dst.tolist(), self._t.tolist()):
            active[t].update((s, d))
            out[TemporalNode(s, t)].append(d)
            if s != d:
                adjacency[TemporalNode(s, t)].add(d)
                adjacency[TemporalNode(d, t)].add(s)
        return (
            {key: tuple(sorted(value)) for key, value in adjacency.items()},
            {key: tuple(value) for key, value in out.items()},
            {t: frozenset(value) for t, value in active.items()},
        )

    @property
    def m(self) -> int:
        return len(self._t)

    @property
    def src(self) -> np.ndarray:
        return self._src

    @property
    def dst(self) -> np.ndarray:
        return self._dst

    @property
    def timestamps(self) -> np.ndarray:
        return self._t

    @property
    def edges(self) -> list[TemporalEdge]:
        return [TemporalEdge(*e) for e in zip(self._src.tolist(), self._dst.tolist(), self._t.tolist())]

    def edge_slice(self, t: int) -> slice:
        self._check_timestamp(t)
        return slice(int(self._offsets[t - 1]), int(self._offsets[t]))

    def edges_at(self, t: int) -> list[TemporalEdge]:
        part = self.edge_slice(t)
        return [
            TemporalEdge(*e)
            for e in zip(self._src[part].tolist(), self._dst[part].tolist(), self._t[part].tolist())
        ]

    def snapshot_edge_counts(self) -> list[int]:
        return np.diff(self._offsets).astype(int).tolist()

    def temporal_nodes(self) -> list[TemporalNode]:
        """All n*T temporal nodes, timestamp-major."""
        return [TemporalNode(v, t) for t in range(1, self.T + 1) for v in range(1, self.n + 1)]

    def is_active(self, v: TemporalNode) -> bool:
        return v.node in self._active.get(v.t, ())

    def active_nodes(self, t: int) -> frozenset[int]:
        return self._active.get(t, frozenset())

    def out_neighbors(self, v: TemporalNode) -> tuple[int, ...]:
        """Directed out-neighbors of v at its own timestamp, with multiplicity."""
        return self._out.get(v, ())

    def out_degree(self, v: TemporalNode) -> int:
        return len(self._out.get(v, ()))

    def _check_timestamp(self, t: int):
        if not 1 <= t <= self.T:
            raise RangeError(f"timestamp {t} outside 1..{self.T}")

    def _check_node(self, v: TemporalNode):
        if not 1 <= v.node <= self.n:
            raise RangeError(f"node {v.node} outside 1..{self.n}")
        self._check_timestamp(v.t)

    def cumulative_snapshot(self, t: int) -> StaticSnapshot:
        """Static graph of every edge with timestamp <= t."""
        self._check_timestamp(t)
        stop = int(self._offsets[t])
        src, dst = self._src[:stop].tolist(), self._dst[:stop].tolist()
        directed = tuple(TemporalEdge(*e) for e in zip(src, dst, self._t[:stop].tolist()))
        simple = frozenset((min(s, d), max(s, d)) for s, d in zip(src, dst) if s != d)
        return StaticSnapshot(nodes=frozenset(src) | frozenset(dst), directed=directed, simple=simple)

    def _within_hops(self, start: int, hops: int, first: int, last: int) -> set[int]:
        # BFS on the undirected union of snapshots first..last
        seen = {start}
        frontier = [start]
        for _ in range(hops):
            following = []
            for x in frontier:
                for s in range(first, last + 1):
                    for y in self._adjacency.get(TemporalNode(x, s), ()):
                        if y not in seen:
                            seen.add(y)
                            following.append(y)
            if not following:
                break
            frontier = following
        seen.discard(start)
        return seen

    def temporal_neighborhood(self, v: TemporalNode, d_n: int, t_n: int) -> tuple[TemporalNode, ...]:
        """Active temporal nodes u^t' with |t' - t_v| <= t_n within d_n hops of v.

        Distances are measured on the undirected union of the snapshots shared
        by both time windows; every occurrence of v itself is excluded. The
        result is a sorted tuple with set semantics.
        """
        self._check_node(v)
        if d_n < 1 or t_n < 0:
            raise ValueError("temporal_neighborhood needs d_n >= 1 and t_n >= 0")
        return self._neighborhood_memo(TemporalNode(*v), d_n, t_n)

    def _neighborhood(self, v: TemporalNode, d_n: int, t_n: int) -> tuple[TemporalNode, ...]:
        reach: dict[tuple[int, int], set[int]] = {}
        found = []
        for t2 in range(max(1, v.t - t_n), min(self.T, v.t + t_n) + 1):
            window = (max(1, max(v.t, t2) - t_n), min(self.T, min(v.t, t2) + t_n))
            if window not in reach:
                reach[window] = self._within_hops(v.node, d_n, *window)
            active = self._active.get(t2, frozenset())
            found.extend(TemporalNode(u, t2) for u in reach[window] if u in active)
        return tuple(sorted(found))

    def temporal_degree(self, v: TemporalNode, t_n: int = DEFAULT_TIME_WINDOW) -> int:
        return len(self.temporal_neighborhood(v, 1, t_n))

    def temporal_degrees(self, t_n: int = DEFAULT_TIME_WINDOW) -> np.ndarray:
        """Degrees of all temporal nodes in temporal_nodes() order."""
        return np.array([self.temporal_degree(v, t_n) for v in self.temporal_nodes()], dtype=np.float64)

    def __eq__(self, other):
        if not isinstance(other, TemporalGraph):
            return NotImplemented
        return (
            self.n == other.n
            and self.T == other.T
            and np.array_equal(self._src, other._src)
            and np.array_equal(self._dst, other._dst)
            and np.array_equal(self._t, other._t)
        )

    __hash__ = None

    def __repr__(self):
        return f"<TemporalGraph(n={self.n}, T={self.T}, m={self.m})>"


def _lines(text: Union[str, TextIO, Iterable[str]]) -> Iterable[str]:
    if isinstance(text, str):
        return text.splitlines()
    return text


def _read_rows(text: Union[str, TextIO, Iterable[str]]) -> np.ndarray:
    raw = []
    for line_number, line in enumerate(_lines(text), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = stripped.split()
        if len(fields) != 3:
            logger.error("Malformed edge at line %d: expected 3 fields, got %d", line_number, len(fields))
            raise ParseError(line_number, f"expected 'src dst timestamp', got {len(fields)} fields")
        try:
            raw.append(tuple(int(f) for f in fields))
        except ValueError as e:
            logger.error("Malformed edge at line %d: %s", line_number, stripped)
            raise ParseError(line_number, f"non-integer field in '{stripped}'") from e

    if not raw:
        logger.error("Edge list contains no edges")
        raise EmptyInputError("edge list contains no edges")
    return np.array(raw, dtype=np.int64).reshape(-1, 3)


@dataclass(frozen=True)
class EdgeListIndex:
    """Raw-to-compact mapping of one compacted edge list.

    `ids` maps raw node ids to 1..n by first appearance. Without binning,
    `stamps` holds the distinct raw timestamps in ascending order; with
    binning, raw timestamps are cut into `binning` equal-width bins over
    [low, high].
    """

    ids: dict[int, int]
    stamps: tuple[int, ...] = ()
    binning: Optional[int] = None
    low: int = 0
    high: int = 0

    @classmethod
    def build(cls, rows: np.ndarray, binning: Optional[int] = None) -> "EdgeListIndex":
        ids: dict[int, int] = {}
        for src, dst in rows[:, :2].tolist():
            ids.setdefault(src, len(ids) + 1)
            ids.setdefault(dst, len(ids) + 1)
        stamps = rows[:, 2]
        if binning is None:
            return cls(ids, stamps=tuple(np.unique(stamps).tolist()))
        if binning < 1:
            logger.error("Invalid binning %d", binning)
            raise ConfigError(f"binning must be >= 1, got {binning}")
        return cls(ids, binning=binning, low=int(stamps.min()), high=int(stamps.max()))

    @property
    def T(self) -> int:
        return self.binning if self.binning is not None else len(self.stamps)

    def timestamp_indices(self, stamps: np.ndarray) -> np.ndarray:
        if self.binning is None:
            distinct = np.asarray(self.stamps, dtype=np.int64)
            index = np.searchsorted(distinct, stamps)
            known = (index < len(distinct)) & (distinct[np.minimum(index, len(distinct) - 1)] == stamps)
            if not known.all():
                unknown = int(stamps[~known][0])
                logger.error("Timestamp %d does not occur in the indexed edge list", unknown)
                raise RangeError(f"timestamp {unknown} does not occur in the original edge list")
            return index + 1
        if stamps.min() < self.low or stamps.max() > self.high:
            raise RangeError(f"timestamps outside the binned range {self.low}..{self.high}")
        if self.high == self.low:
            return np.ones_like(stamps)
        scaled = (stamps - self.low) * self.binning // (self.high - self.low)
        return np.minimum(scaled, self.binning - 1) + 1


def compact_edge_list(
    text: Union[str, TextIO, Iterable[str]],
    binning: Optional[int] = None,
    index: Optional[EdgeListIndex] = None,
) -> tuple[TemporalGraph, EdgeListIndex]:
    """Parses raw "src dst timestamp" lines and renumbers them.

    Without `index` the mapping is built from the file itself. With `index`
    the file is mapped the same way as the edge list that produced it; node
    ids it has never seen get ids after n.
    """
    rows = _read_rows(text)
    if index is None:
        index = EdgeListIndex.build(rows, binning)
    elif binning is not None:
        raise UsageError("binning comes from the index when one is given")

    ids = dict(index.ids)
    for src, dst in rows[:, :2].tolist():
        ids.setdefault(src, len(ids) + 1)
        ids.setdefault(dst, len(ids) + 1)
    if len(ids) > len(index.ids):
        logger.warning("%d node ids are not in the index, numbered after %d", len(ids) - len(index.ids), len(index.ids))
    t_index = index.timestamp_indices(rows[:, 2])
    edges = [(ids[s], ids[d], int(t)) for (s, d), t in zip(rows[:, :2].tolist(), t_index.tolist())]
    graph = TemporalGraph(len(ids), index.T, edges)
    logger.info("Parsed edge list: n=%d, T=%d, m=%d", graph.n, graph.T, graph.m)
    return graph, index


def parse_edge_list(
    text: Union[str, TextIO, Iterable[str]],
    binning: Optional[int] = None,
    compact: bool = True,
) -> TemporalGraph:
    """Parses "src dst timestamp" lines into a TemporalGraph.

    With compact=True node ids are renumbered 1..n by first appearance and the
    distinct raw timestamps are mapped to 1..T in ascending order (or to
    `binning` equal-width bins). With compact=False the file must already use
    ids >= 1 and timestamp indices >= 1, which are kept as they are.
    """
    if compact:
        return compact_edge_list(text, binning)[0]
    if binning is not None:
        raise UsageError("binning requires compact=True")
    array = _read_rows(text)
    if array[:, :2].min() < 1 or array[:, 2].min() < 1:
        raise ParseError(1, "pre-indexed edge lists need ids and timestamps >= 1")
    n, T = int(array[:, :2].max()), int(array[:, 2].max())
    graph = TemporalGraph(n, T, array.tolist())
    logger.info("Parsed indexed edge list: n=%d, T=%d, m=%d", n, T, graph.m)
    return graph


def load_edge_list(path: Union[str, Path], binning: Optional[int] = None, compact: bool = True) -> TemporalGraph:
    with open(path, encoding="utf-8") as handle:
        return parse_edge_list(handle, binning=binning, compact=compact)


def format_edge_list(g: TemporalGraph, header: Iterable[str] = ()) -> str:
    lines = [f"# {h}" for h in header]
    lines.extend(f"{s} {d} {t}" for s, d, t in g.edges)
    return "\n".join(lines) + "\n"


def write_edge_list(g: TemporalGraph, path: Union[str, Path], header: Iterable[str] = ()):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_edge_list(g, header), encoding="utf-8")
    logger.info("Wrote %d temporal edges to %s", g.m, path)
