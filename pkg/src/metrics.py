"""Static statistics of cumulative snapshots and their relative-error
comparison across a pair of temporal graphs."""

import math
from dataclasses import dataclass
from typing import Iterator, Literal, Sequence, Union

import networkx as nx
import numpy as np

from src.errors import MetricError, ShapeError, UsageError
from src.logging_config import logger
from src.tgraph import StaticSnapshot, TemporalGraph

METRICS = ("mean-degree", "claw", "wedge", "triangle", "lcc", "ple", "n-components")


@dataclass(frozen=True)
class MetricSeries:
    metric: str
    values: tuple[float, ...]

    def __len__(self):
        return len(self.values)


def _degrees(graph: nx.Graph) -> np.ndarray:
    return np.array([d for _, d in graph.degree()], dtype=np.int64)


def power_law_exponent(graph: nx.Graph) -> float:
    degrees = _degrees(graph)
    positive = degrees[degrees >= 1]
    if not len(positive):
        logger.error("Power-law exponent requested for a snapshot without edges")
        raise MetricError("power-law exponent needs at least one node with positive degree")
    log_sum = np.log(positive / positive.min()).sum()
    if log_sum == 0:
        logger.warning("All positive degrees are equal, power-law exponent diverges")
        return math.inf
    return float(1 + len(positive) / log_sum)


def _statistic(graph: nx.Graph, metric: str) -> float:
    if metric == "mean-degree":
        n = graph.number_of_nodes()
        return 2 * graph.number_of_edges() / n if n else 0.0
    if metric == "claw":
        return float(sum(math.comb(int(d), 3) for d in _degrees(graph)))
    if metric == "wedge":
        return float(sum(math.comb(int(d), 2) for d in _degrees(graph)))
    if metric == "triangle":
        return float(sum(nx.triangles(graph).values()) // 3)
    if metric == "lcc":
        return float(max((len(c) for c in nx.connected_components(graph)), default=0))
    if metric == "ple":
        return power_law_exponent(graph)
    if metric == "n-components":
        return float(nx.number_connected_components(graph))
    raise UsageError(f"unknown metric '{metric}' (choose from {', '.join(METRICS)})")


def graph_statistic(s: Union[StaticSnapshot, nx.Graph], metric: str) -> float:
    """One statistic of the simple undirected projection of a snapshot."""
    graph = s.to_networkx() if isinstance(s, StaticSnapshot) else s
    return _statistic(graph, metric)


def cumulative_graphs(g: TemporalGraph) -> Iterator[nx.Graph]:
    """Yields the simple undirected cumulative snapshot for t = 1..T,
    growing a single graph in place."""
    graph = nx.Graph()
    for t in range(1, g.T + 1):
        for src, dst, _ in g.edges_at(t):
            graph.add_node(src)
            graph.add_node(dst)
            if src != dst:
                graph.add_edge(src, dst)
        yield graph


def metric_series(g: TemporalGraph, metric: str, strict: bool = True) -> MetricSeries:
    """Statistic of every cumulative snapshot; with strict=False undefined
    values become NaN instead of raising."""
    return all_metric_series(g, (metric,), strict)[metric]


def all_metric_series(
    g: TemporalGraph, metrics: Sequence[str] = METRICS, strict: bool = True
) -> dict[str, MetricSeries]:
    values: dict[str, list[float]] = {metric: [] for metric in metrics}
    for t, graph in enumerate(cumulative_graphs(g), start=1):
        for metric in metrics:
            try:
                values[metric].append(_statistic(graph, metric))
            except MetricError:
                if strict:
                    raise
                logger.warning("%s undefined on snapshot %d, recorded as NaN", metric, t)
                values[metric].append(math.nan)
    return {metric: MetricSeries(metric, tuple(series)) for metric, series in values.items()}


def relative_errors(original: Sequence[float], generated: Sequence[float], metric: str = "") -> list[float]:
    """r_t = |(f - f') / f| over timestamps where it is defined."""
    if len(original) != len(generated):
        raise ShapeError(f"series lengths differ: {len(original)} vs {len(generated)}")
    errors, skipped = [], []
    for t, (f, f2) in enumerate(zip(original, generated), start=1):
        if not (math.isfinite(f) and math.isfinite(f2)):
            if f == f2:
                errors.append(0.0)
            else:
                skipped.append(t)
        elif f == 0:
            if f2 == 0:
                errors.append(0.0)
            else:
                skipped.append(t)
        else:
            errors.append(abs((f - f2) / f))
    if skipped:
        logger.warning("%s: relative error undefined at timestamps %s, excluded", metric or "series", skipped)
    return errors


def summarize(errors: Sequence[float], mode: Literal["avg", "med"]) -> float:
    if mode not in ("avg", "med"):
        raise UsageError(f"unknown comparison mode '{mode}'")
    if not errors:
        logger.warning("No valid timestamps to compare, result is NaN")
        return math.nan
    return float(np.mean(errors) if mode == "avg" else np.median(errors))


def compare_values(
    original: Sequence[float], generated: Sequence[float], mode: Literal["avg", "med"], metric: str = ""
) -> float:
    return summarize(relative_errors(original, generated, metric), mode)


def compare_series(g: TemporalGraph, g2: TemporalGraph, metric: str, mode: Literal["avg", "med"]) -> float:
    """Mean (f_avg) or median (f_med) relative error of one statistic."""
    if g.T != g2.T:
        logger.error("Cannot compare graphs with T=%d and T=%d", g.T, g2.T)
        raise ShapeError(f"graphs have different snapshot counts ({g.T} vs {g2.T})")
    original = metric_series(g, metric, strict=False).values
    generated = metric_series(g2, metric, strict=False).values
    return compare_values(original, generated, mode, metric)
