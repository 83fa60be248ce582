import math

import numpy as np
import pytest

from src.errors import ShapeError
from src.generator import generate_er, generate_tgae
from src.metrics import METRICS
from src.model import init_model
from src.motifs import MotifHistogram, count_temporal_motifs
from src.reports import (
    EvaluationReport,
    evaluate_graphs,
    motif_frame,
    series_frame,
    write_loss_history,
    write_motifs,
    write_report,
)
from src.rng import RandomStreams
from src.settings import VariantFlags
from src.synthetic import scalability_graph
from src.tgraph import TemporalGraph


@pytest.fixture
def datasets(toy_graph, community_graph):
    return [toy_graph, community_graph, scalability_graph(30, 4, 120, seed=1)]


def test_graph_against_itself_scores_zero(datasets):
    for g in datasets:
        report = evaluate_graphs(g, [g], delta=2)
        for item in report.metrics:
            assert item.f_avg == 0 and item.f_med == 0, item.metric
        assert report.motifs.mmd <= 1e-12


def test_generated_graphs_conserve_edges(datasets, tiny_settings):
    for g in datasets:
        streams = RandomStreams(6)
        model = init_model(g, tiny_settings, VariantFlags(), streams)
        generated = generate_tgae(model, g, streams)
        assert generated.m == g.m
        keys = [(e.src, e.dst, e.t) for e in generated.edges]
        assert len(keys) == len(set(keys))


def test_report_structure(community_graph):
    er = [generate_er(community_graph.n, community_graph.snapshot_edge_counts(), RandomStreams(1), s) for s in range(2)]
    report = evaluate_graphs(community_graph, er, seed=9)
    assert [item.metric for item in report.metrics] == list(METRICS)
    assert report.generated_count == 2
    assert (report.n, report.T, report.m) == (community_graph.n, community_graph.T, community_graph.m)
    assert len(report.motifs.original) == 36
    assert len(report.motifs.generated) == 2
    assert report.motifs.delta == 1
    wedge = report.metric("wedge")
    assert len(wedge.original) == community_graph.T
    assert wedge.f_avg > 0
    assert EvaluationReport.model_validate_json(report.model_dump_json()) == report


def test_report_needs_matching_snapshot_count(toy_graph):
    with pytest.raises(ShapeError):
        evaluate_graphs(toy_graph, [TemporalGraph(toy_graph.n, toy_graph.T + 1, toy_graph.edges)])
    with pytest.raises(ShapeError):
        evaluate_graphs(toy_graph, [])


def test_mmd_undefined_without_motifs(caplog):
    g = TemporalGraph(4, 2, [(1, 2, 1), (3, 4, 2)])
    report = evaluate_graphs(g, [g])
    assert report.motifs.mmd is None
    assert "undefined" in caplog.text


def test_series_frame_averages_generated_graphs(toy_graph):
    other = TemporalGraph(toy_graph.n, toy_graph.T, [(1, 2, 1), (2, 3, 2), (3, 4, 3)])
    report = evaluate_graphs(toy_graph, [toy_graph, other])
    frame = series_frame(report.metric("mean-degree"))
    assert list(frame.columns) == ["timestamp", "original", "generated"]
    expected = np.mean([report.metric("mean-degree").generated[i] for i in range(2)], axis=0)
    assert np.allclose(frame["generated"].to_numpy(), expected)


def test_write_report_files(toy_graph, tmp_path):
    report = evaluate_graphs(toy_graph, [toy_graph], seed=4)
    path = write_report(report, tmp_path / "r")
    assert path.name == "report.json"
    for metric in METRICS:
        lines = (tmp_path / "r" / f"series_{metric}.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "# seed=4"
        assert len(lines) == 2 + toy_graph.T
    assert EvaluationReport.model_validate_json(path.read_text(encoding="utf-8")) == report


def test_infinite_values_are_written_as_null(toy_graph):
    # every node of the first snapshot has degree 2, so the exponent diverges
    report = evaluate_graphs(toy_graph, [toy_graph])
    assert report.metric("ple").original[0] is None
    assert report.metric("ple").f_avg == 0


def test_motif_frame_probabilities(toy_graph, tmp_path):
    histogram = count_temporal_motifs(toy_graph, 2)
    frame = motif_frame(histogram)
    assert frame["count"].sum() == histogram.total
    assert math.isclose(frame["probability"].sum(), 1.0)
    empty = motif_frame(MotifHistogram(np.zeros(36, dtype=np.int64), 1))
    assert frame.shape == empty.shape and empty["probability"].sum() == 0
    write_motifs(histogram, tmp_path / "m.csv", seed=2)
    assert (tmp_path / "m.csv").read_text(encoding="utf-8").startswith("# seed=2\nmotif,count,probability\n")


def test_loss_history_file(tmp_path):
    write_loss_history([(1, 2.5, 0.1), (2, 2.0, 0.2)], tmp_path / "loss.csv", seed=3)
    assert (tmp_path / "loss.csv").read_text(encoding="utf-8") == "# seed=3\nepoch,loss,kl\n1,2.5,0.1\n2,2.0,0.2\n"
