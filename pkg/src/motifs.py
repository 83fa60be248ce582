"""Census of 3-edge delta-temporal motifs on at most three nodes, and the
total-variation / MMD comparison of motif distributions."""

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from tqdm.contrib.concurrent import process_map

from src.errors import UndefinedDistributionError, UsageError
from src.logging_config import logger
from src.tgraph import TemporalGraph

Code = tuple[tuple[int, int], tuple[int, int], tuple[int, int]]


def canonical_code(pairs: Sequence[tuple[int, int]]) -> Code:
    """Relabels nodes by order of first appearance along the edge sequence."""
    labels: dict[int, int] = {}
    code = []
    for src, dst in pairs:
        labels.setdefault(src, len(labels))
        labels.setdefault(dst, len(labels))
        code.append((labels[src], labels[dst]))
    return tuple(code)


def _motif_classes() -> tuple[Code, ...]:
    codes = set()
    for pairs in itertools.product(itertools.permutations(range(3), 2), repeat=3):
        codes.add(canonical_code(pairs))
    return tuple(sorted(codes))


MOTIF_CLASSES = _motif_classes()
assert len(MOTIF_CLASSES) == 36
MOTIF_INDEX = {code: i for i, code in enumerate(MOTIF_CLASSES)}
MOTIF_LABELS = tuple(" ".join(f"{a}{b}" for a, b in code) for code in MOTIF_CLASSES)


def default_delta(T: int) -> int:
    return math.ceil(T / 10)


@dataclass(frozen=True)
class MotifHistogram:
    counts: np.ndarray
    delta: int

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def normalized(self) -> np.ndarray:
        if self.total == 0:
            logger.error("Motif histogram is empty and cannot be normalized")
            raise UndefinedDistributionError("motif histogram has no instances")
        return self.counts / self.total

    def by_label(self) -> dict[str, int]:
        return dict(zip(MOTIF_LABELS, self.counts.tolist()))


class _EdgeIndex:
    """Self-loop-free edges in (t, src, dst) order with per-node incidence lists."""

    def __init__(self, g: TemporalGraph):
        keep = g.src != g.dst
        self.src = g.src[keep]
        self.dst = g.dst[keep]
        self.t = g.timestamps[keep]
        incident: dict[int, list[int]] = {}
        for i, (s, d) in enumerate(zip(self.src.tolist(), self.dst.tolist())):
            incident.setdefault(s, []).append(i)
            incident.setdefault(d, []).append(i)
        self.incident = {node: np.array(edges, dtype=np.int64) for node, edges in incident.items()}

    def __len__(self):
        return len(self.t)

    def between(self, nodes, low: int, high: int) -> np.ndarray:
        """Edge indices in (low, high) touching any of `nodes`."""
        found = []
        for node in nodes:
            edges = self.incident[node]
            found.append(edges[np.searchsorted(edges, low, side="right") : np.searchsorted(edges, high, side="left")])
        return np.unique(np.concatenate(found)) if found else np.zeros(0, dtype=np.int64)


def _count_range(index: _EdgeIndex, delta: int, first: int, last: int) -> np.ndarray:
    counts = np.zeros(len(MOTIF_CLASSES), dtype=np.int64)
    src, dst, t = index.src, index.dst, index.t
    for i in range(first, last):
        end = int(np.searchsorted(t, t[i] + delta, side="right"))
        a, b = int(src[i]), int(dst[i])
        for j in index.between((a, b), i, end).tolist():
            nodes = {a, b, int(src[j]), int(dst[j])}
            for k in index.between(nodes, j, end).tolist():
                if len(nodes | {int(src[k]), int(dst[k])}) > 3:
                    continue
                code = canonical_code(((a, b), (int(src[j]), int(dst[j])), (int(src[k]), int(dst[k]))))
                counts[MOTIF_INDEX[code]] += 1
    return counts


def _count_chunk(args) -> np.ndarray:
    return _count_range(*args)


def count_temporal_motifs(g: TemporalGraph, delta: Optional[int] = None, workers: int = 1) -> MotifHistogram:
    """Counts edge triples i < j < k in (t, src, dst) order with
    t_k - t_i <= delta spanning at most three nodes. Self-loops are ignored."""
    if delta is None:
        delta = default_delta(g.T)
    if delta < 0:
        raise UsageError("delta must be >= 0")
    index = _EdgeIndex(g)
    if workers > 1 and len(index) > workers:
        bounds = np.linspace(0, len(index), workers * 4 + 1, dtype=np.int64)
        chunks = [(index, delta, int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
        counts = sum(process_map(_count_chunk, chunks, max_workers=workers, chunksize=1, disable=True))
    else:
        counts = _count_range(index, delta, 0, len(index))
    histogram = MotifHistogram(counts=np.asarray(counts, dtype=np.int64), delta=delta)
    logger.info("Counted %d temporal motif instances (delta=%d)", histogram.total, delta)
    return histogram


def tv_distance(p: MotifHistogram, q: MotifHistogram) -> float:
    """Half the L1 distance between the normalized histograms."""
    return float(0.5 * np.abs(p.normalized() - q.normalized()).sum())


def gaussian_tv_kernel(p: MotifHistogram, q: MotifHistogram, sigma_k: float) -> float:
    return math.exp(-tv_distance(p, q) ** 2 / (2 * sigma_k**2))


def mmd(P: Sequence[MotifHistogram], Q: Sequence[MotifHistogram], sigma_k: float = 1.0) -> float:
    """Biased squared MMD between two sets of histograms, clamped at zero."""
    if not P or not Q:
        raise UsageError("MMD needs two non-empty sets of histograms")
    if sigma_k <= 0:
        raise UsageError("kernel bandwidth must be positive")

    def mean_kernel(X, Y):
        return float(np.mean([gaussian_tv_kernel(x, y, sigma_k) for x in X for y in Y]))

    value = mean_kernel(P, P) + mean_kernel(Q, Q) - 2 * mean_kernel(P, Q)
    return max(value, 0.0)
