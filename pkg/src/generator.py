"""Score-matrix assembly from a trained model, quota-constrained edge
sampling, and the E-R / B-A baselines."""

import time
from typing import Callable, Mapping, Optional, Sequence

import networkx as nx
import numpy as np
import torch
from tqdm import tqdm

from src.errors import GenerationError
from src.logging_config import logger
from src.model import TgaeModel, decode_batch, encode_batch
from src.rng import RandomStreams
from src.sampler import build_computation_graphs, sample_egos
from src.tgraph import TemporalGraph, TemporalNode

CandidateFn = Callable[[TemporalNode], np.ndarray]


class ScoreMatrix:
    """Sparse T x n x n accumulation of edge probabilities.

    Each owner (t, u) keeps running sums over its candidate columns and the
    number of rows that contributed. Without a candidate function every owner
    covers all n columns; with one, rows of owners without candidates are
    dropped.
    """

    def __init__(self, n: int, T: int, candidates: Optional[CandidateFn] = None):
        self.n = n
        self.T = T
        self._candidates = candidates
        self._columns: dict[TemporalNode, np.ndarray] = {}
        self._sums: dict[TemporalNode, np.ndarray] = {}
        self._counts: dict[TemporalNode, int] = {}
        self._all_columns = np.arange(1, n + 1)

    def columns(self, owner: TemporalNode) -> np.ndarray:
        if self._candidates is None:
            return self._all_columns
        if owner not in self._columns:
            self._columns[owner] = np.asarray(self._candidates(owner), dtype=np.int64)
        return self._columns[owner]

    def add_row(self, owner: TemporalNode, probs: np.ndarray):
        columns = self.columns(owner)
        if not len(columns):
            return
        values = np.asarray(probs, dtype=np.float64)[columns - 1]
        if owner in self._sums:
            self._sums[owner] += values
            self._counts[owner] += 1
        else:
            self._sums[owner] = values.copy()
            self._counts[owner] = 1

    def owners(self) -> list[TemporalNode]:
        return sorted(self._sums)

    def count(self, owner: TemporalNode) -> int:
        return self._counts.get(owner, 0)

    def row(self, owner: TemporalNode) -> tuple[np.ndarray, np.ndarray]:
        """Candidate columns and averaged scores for an owner (empty if unseen)."""
        if owner not in self._sums:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        return self.columns(owner), self._sums[owner] / self._counts[owner]

    def score(self, t: int, u: int, v: int) -> float:
        columns, scores = self.row(TemporalNode(u, t))
        hit = np.flatnonzero(columns == v)
        return float(scores[hit[0]]) if len(hit) else 0.0

    def __len__(self):
        return len(self._sums)


def neighborhood_candidates(g: TemporalGraph, radius: int, t_n: int) -> CandidateFn:
    def candidates(owner: TemporalNode) -> np.ndarray:
        return np.unique([u.node for u in g.temporal_neighborhood(owner, radius, t_n)]).astype(np.int64)

    return candidates


def assemble_scores(
    m: TgaeModel,
    g: TemporalGraph,
    passes: int,
    streams: RandomStreams,
    sample: int = 0,
    widen: bool = False,
    batch_size: int = 256,
    threads: int = 1,
    progress: bool = False,
) -> ScoreMatrix:
    """Every temporal node serves once per pass as an ego center; each decoded
    row is added to its owner's slice of the score matrix."""
    if (m.n, m.T) != (g.n, g.T):
        raise GenerationError(f"model was trained for n={m.n}, T={m.T}, graph has n={g.n}, T={g.T}")
    sampling = m.settings.sampling(m.variant)
    candidates = None if widen else neighborhood_candidates(g, m.settings.candidate_radius, sampling.t_n)
    scores = ScoreMatrix(g.n, g.T, candidates)
    centers = g.temporal_nodes()
    batches = range(0, len(centers), batch_size)
    started = time.perf_counter()
    m.eval()
    with torch.no_grad():
        for p in range(passes):
            for b, start in enumerate(tqdm(batches, disable=not progress, desc=f"assemble pass {p + 1}")):
                chunk = centers[start : start + batch_size]
                egos = sample_egos(g, chunk, sampling, streams, "assemble", (sample, p, b), threads)
                stack = build_computation_graphs(egos, m.k)
                rows = decode_batch(m, egos, encode_batch(m, stack), streams.generator("decode", sample, p, b))
                probs = rows.probs.numpy()
                for owner, row in zip(rows.owners, probs):
                    scores.add_row(owner, row)
    logger.info("Assembled scores for %d owners in %.2fs", len(scores), time.perf_counter() - started)
    return scores


def observed_quotas(g: TemporalGraph) -> dict[TemporalNode, int]:
    """Per-temporal-node out-degree with multiplicity."""
    quotas: dict[TemporalNode, int] = {}
    for src, _, t in g.edges:
        key = TemporalNode(src, t)
        quotas[key] = quotas.get(key, 0) + 1
    return quotas


def sample_temporal_graph(
    s: ScoreMatrix,
    target_m: int,
    per_node_quota: Mapping[TemporalNode, int],
    streams: RandomStreams,
    sample: int = 0,
) -> TemporalGraph:
    """Draws each temporal node's quota of distinct destinations without
    replacement from its normalized scores.

    Owners whose support is too small are topped up uniformly from the other
    nodes, and from the owner itself only as a last resort.
    """
    total = sum(per_node_quota.values())
    if total != target_m:
        logger.error("Quotas sum to %d but %d edges were requested", total, target_m)
        raise GenerationError(f"quotas sum to {total}, expected {target_m}")

    edges = []
    short_owners, short_edges = 0, 0
    for owner in sorted(per_node_quota):
        quota = per_node_quota[owner]
        if quota <= 0:
            continue
        if quota > s.n:
            raise GenerationError(f"{owner} needs {quota} distinct destinations but the graph has {s.n} nodes")
        rng = streams.generator("generation", sample, owner.t, owner.node)
        columns, scores = s.row(owner)
        support = columns[scores > 0]
        weights = scores[scores > 0]
        take = min(quota, len(support))
        chosen = []
        if take:
            chosen = rng.choice(support, size=take, replace=False, p=weights / weights.sum()).tolist()
        if take < quota:
            short_owners += 1
            short_edges += quota - take
            taken = set(chosen) | {owner.node}
            pool = np.array([v for v in range(1, s.n + 1) if v not in taken], dtype=np.int64)
            fill = min(quota - take, len(pool))
            if fill:
                chosen += rng.choice(pool, size=fill, replace=False).tolist()
            if len(chosen) < quota:
                chosen.append(owner.node)
        edges.extend((owner.node, int(v), owner.t) for v in chosen)

    if short_owners:
        logger.warning(
            "%d temporal nodes had fewer scored candidates than their quota; %d edges filled uniformly",
            short_owners, short_edges,
        )
    return TemporalGraph(s.n, s.T, sorted(edges))


def generate_tgae(
    m: TgaeModel,
    g: TemporalGraph,
    streams: RandomStreams,
    passes: int = 1,
    sample: int = 0,
    widen: bool = False,
    batch_size: int = 256,
    threads: int = 1,
) -> TemporalGraph:
    """Assembles scores and samples one graph with g's per-node out-degrees."""
    scores = assemble_scores(m, g, passes, streams, sample, widen, batch_size, threads)
    generated = sample_temporal_graph(scores, g.m, observed_quotas(g), streams, sample)
    logger.info("Generated graph %d with %d edges", sample, generated.m)
    return generated


def generate_er(n: int, per_snapshot_m: Sequence[int], streams: RandomStreams, sample: int = 0) -> TemporalGraph:
    """Directed G(n, m_t) per snapshot."""
    edges = []
    for t, m_t in enumerate(per_snapshot_m, start=1):
        if m_t > n * (n - 1):
            logger.error("Snapshot %d asks for %d edges on %d nodes", t, m_t, n)
            raise GenerationError(f"snapshot {t}: {m_t} edges exceed the {n * (n - 1)} possible directed edges")
        snapshot = nx.gnm_random_graph(n, m_t, seed=streams.seed_int("baseline", sample, t), directed=True)
        edges.extend((u + 1, v + 1, t) for u, v in snapshot.edges())
    return TemporalGraph(n, len(per_snapshot_m), sorted(edges))


def generate_ba(n: int, m_attach: int, T: int, streams: RandomStreams, sample: int = 0) -> TemporalGraph:
    """Preferential attachment per snapshot, grown from an m_attach-clique.

    Undirected growth edges are oriented from the newer (larger id) node.
    """
    if m_attach < 1 or m_attach >= n:
        logger.error("B-A needs 1 <= m_attach < n, got m_attach=%d, n=%d", m_attach, n)
        raise GenerationError(f"m_attach must satisfy 1 <= m_attach < n (got {m_attach}, n={n})")
    edges = []
    for t in range(1, T + 1):
        seed_graph = nx.complete_graph(m_attach) if m_attach >= 2 else None
        snapshot = nx.barabasi_albert_graph(
            n, m_attach, seed=streams.seed_int("baseline", sample, t), initial_graph=seed_graph
        )
        edges.extend((max(u, v) + 1, min(u, v) + 1, t) for u, v in snapshot.edges())
    return TemporalGraph(n, T, sorted(edges))


def attachment_for(g: TemporalGraph) -> int:
    """m_attach whose per-snapshot edge count is closest to g's mean."""
    mean_edges = g.m / g.T
    best, best_gap = 1, None
    for m_attach in range(1, g.n):
        gap = abs((g.n - m_attach) * m_attach + m_attach * (m_attach - 1) // 2 - mean_edges)
        if best_gap is None or gap < best_gap:
            best, best_gap = m_attach, gap
    return best
