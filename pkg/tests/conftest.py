import os

os.environ.setdefault("TEMPOGRAPH_LOG_FILE", "")

import pytest
from click.testing import CliRunner

from src.rng import RandomStreams
from src.settings import ModelSettings, TrainSettings
from src.synthetic import planted_community_graph
from src.tgraph import TemporalGraph, parse_edge_list

TOY_EDGES = """\
# src dst timestamp
1 2 1
2 3 1
3 1 1
1 4 2
4 5 2
5 1 2
2 5 3
3 4 3
4 2 3
5 3 3
"""


@pytest.fixture
def toy_text():
    return TOY_EDGES


@pytest.fixture
def toy_graph():
    return parse_edge_list(TOY_EDGES)


@pytest.fixture
def path_graph():
    """a-b-c all at t=1."""
    return TemporalGraph(3, 1, [(1, 2, 1), (2, 3, 1)])


@pytest.fixture
def ten_node_graph():
    edges = [(v, v % 10 + 1, 1) for v in range(1, 11)]
    edges += [(v, (v + 2) % 10 + 1, 2) for v in range(1, 11, 2)]
    edges += [(1, 5, 1), (5, 1, 2), (3, 8, 2)]
    return TemporalGraph(10, 2, edges)


@pytest.fixture
def community_graph():
    return planted_community_graph(n=40, T=3, communities=4, p_in=0.2, p_out=0.01, closure=0.2, seed=3)


@pytest.fixture
def tiny_settings():
    return ModelSettings(k=2, th=3, n_s=4, d_in=6, d_enc=4, d_lat=5, h_tga=2)


@pytest.fixture
def short_training():
    return TrainSettings(epochs=2)


@pytest.fixture
def streams():
    return RandomStreams(11)


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def dataset_file(tmp_path):
    path = tmp_path / "toy.txt"
    path.write_text(TOY_EDGES, encoding="utf-8")
    return path


@pytest.fixture
def run_config(tmp_path, dataset_file):
    path = tmp_path / "run.toml"
    path.write_text(
        f"""dataset = "{dataset_file.as_posix()}"
seed = 5
out_dir = "{(tmp_path / 'out').as_posix()}"

[model]
k = 2
th = 3
n_s = 4
d_in = 6
d_enc = 4
d_lat = 5
h_tga = 2

[train]
epochs = 2

[generate]
samples = 2
""",
        encoding="utf-8",
    )
    return path
