"""Evaluation of generated graphs against an original and the JSON / CSV
report files derived from it."""

import math
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from src.errors import ShapeError, UndefinedDistributionError
from src.logging_config import logger
from src.metrics import METRICS, all_metric_series, compare_values
from src.motifs import MOTIF_LABELS, MotifHistogram, count_temporal_motifs, default_delta, mmd
from src.tgraph import TemporalGraph


def _finite(value: float) -> Optional[float]:
    return float(value) if value is not None and math.isfinite(value) else None


class MetricComparison(BaseModel):
    metric: str
    f_avg: Optional[float] = Field(description="mean relative error, averaged over generated graphs")
    f_med: Optional[float] = Field(description="median relative error, averaged over generated graphs")
    original: list[Optional[float]]
    generated: list[list[Optional[float]]]


class MotifComparison(BaseModel):
    delta: int
    sigma_k: float
    classes: list[str] = list(MOTIF_LABELS)
    original: list[int]
    generated: list[list[int]]
    mmd: Optional[float]


class EvaluationReport(BaseModel):
    seed: int
    n: int
    T: int
    m: int
    generated_count: int
    metrics: list[MetricComparison]
    motifs: MotifComparison

    def metric(self, name: str) -> MetricComparison:
        return next(item for item in self.metrics if item.metric == name)


def _mean_defined(values: Sequence[float]) -> Optional[float]:
    finite = [v for v in values if math.isfinite(v)]
    return float(np.mean(finite)) if finite else None


def evaluate_graphs(
    original: TemporalGraph,
    generated: Sequence[TemporalGraph],
    delta: Optional[int] = None,
    sigma_k: float = 1.0,
    seed: int = 0,
    workers: int = 1,
) -> EvaluationReport:
    """Seven snapshot statistics (f_avg / f_med) and motif MMD of the
    generated graphs against the original."""
    if not generated:
        raise ShapeError("evaluation needs at least one generated graph")
    for g in generated:
        if g.T != original.T:
            logger.error("Generated graph has T=%d, original has T=%d", g.T, original.T)
            raise ShapeError(f"generated graph has {g.T} snapshots, original has {original.T}")
        if g.n != original.n:
            logger.warning("Generated graph has n=%d, original has n=%d", g.n, original.n)
    if delta is None:
        delta = default_delta(original.T)
    started = time.perf_counter()

    reference = all_metric_series(original, strict=False)
    candidates = [all_metric_series(g, strict=False) for g in generated]
    metrics = []
    for metric in METRICS:
        truth = reference[metric].values
        averages = [compare_values(truth, c[metric].values, "avg", metric) for c in candidates]
        medians = [compare_values(truth, c[metric].values, "med", metric) for c in candidates]
        metrics.append(
            MetricComparison(
                metric=metric,
                f_avg=_mean_defined(averages),
                f_med=_mean_defined(medians),
                original=[_finite(v) for v in truth],
                generated=[[_finite(v) for v in c[metric].values] for c in candidates],
            )
        )

    original_motifs = count_temporal_motifs(original, delta, workers)
    generated_motifs = [count_temporal_motifs(g, delta, workers) for g in generated]
    try:
        distance = mmd([original_motifs], generated_motifs, sigma_k)
    except UndefinedDistributionError:
        logger.warning("Motif MMD undefined: a graph has no motif instances within delta=%d", delta)
        distance = None
    logger.info("Evaluation of %d generated graphs took %.2fs", len(generated), time.perf_counter() - started)

    return EvaluationReport(
        seed=seed,
        n=original.n,
        T=original.T,
        m=original.m,
        generated_count=len(generated),
        metrics=metrics,
        motifs=MotifComparison(
            delta=delta,
            sigma_k=sigma_k,
            original=original_motifs.counts.tolist(),
            generated=[h.counts.tolist() for h in generated_motifs],
            mmd=distance,
        ),
    )


def _write_csv(frame: pd.DataFrame, path: Path, seed: int):
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(f"# seed={seed}\n")
        frame.to_csv(handle, index=False, lineterminator="\n")


def series_frame(comparison: MetricComparison) -> pd.DataFrame:
    generated = np.array(
        [[np.nan if v is None else v for v in series] for series in comparison.generated], dtype=np.float64
    )
    return pd.DataFrame(
        {
            "timestamp": np.arange(1, len(comparison.original) + 1),
            "original": [np.nan if v is None else v for v in comparison.original],
            "generated": _column_means(generated),
        }
    )


def _column_means(values: np.ndarray) -> np.ndarray:
    means = []
    for column in values.T:
        finite = column[np.isfinite(column)]
        means.append(finite.mean() if len(finite) else np.nan)
    return np.array(means)


def write_report(report: EvaluationReport, out_dir: Path) -> Path:
    """Writes report.json plus series_<metric>.csv files; returns the JSON path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "report.json"
    path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    for comparison in report.metrics:
        _write_csv(series_frame(comparison), out_dir / f"series_{comparison.metric}.csv", report.seed)
    logger.info("Report written to %s", path)
    return path


def motif_frame(histogram: MotifHistogram) -> pd.DataFrame:
    total = histogram.total
    return pd.DataFrame(
        {
            "motif": list(MOTIF_LABELS),
            "count": histogram.counts,
            "probability": histogram.counts / total if total else np.zeros(len(MOTIF_LABELS)),
        }
    )


def write_motifs(histogram: MotifHistogram, path: Path, seed: int = 0) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(motif_frame(histogram), path, seed)
    logger.info("Motif histogram written to %s", path)
    return path


def write_series(g: TemporalGraph, path: Path, seed: int = 0) -> Path:
    """All seven statistics per cumulative snapshot, one column each."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    series = all_metric_series(g, strict=False)
    frame = pd.DataFrame({"timestamp": np.arange(1, g.T + 1)})
    for metric in METRICS:
        frame[metric] = series[metric].values
    _write_csv(frame, path, seed)
    logger.info("Snapshot statistics written to %s", path)
    return path


def write_loss_history(history, path: Path, seed: int = 0) -> Path:
    path = Path(path)
    frame = pd.DataFrame(history, columns=["epoch", "loss", "kl"])
    _write_csv(frame, path, seed)
    return path
