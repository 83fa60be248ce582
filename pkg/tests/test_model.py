import math

import numpy as np
import pytest
import torch
from torch.func import functional_call

from src import model as model_module
from src.errors import ConfigError, DomainError, NumericError
from src.model import (
    EdgeProbRows,
    TgaeModel,
    _decode_inputs,
    approx_loss,
    batches_per_epoch,
    decode_batch,
    decode_ego_graph,
    encode_batch,
    full_batch_loss,
    init_model,
    kl_term,
    reparameterize,
    train,
)
from src.nn import grad
from src.rng import RandomStreams
from src.sampler import EgoGraph, build_computation_graphs, sample_egos
from src.settings import ModelSettings, TrainSettings, VariantFlags
from src.synthetic import planted_community_graph
from src.tgraph import TemporalGraph, TemporalNode


def build_batch(g, settings, variant, centers, seed=0):
    streams = RandomStreams(seed)
    egos = sample_egos(g, centers, settings.sampling(variant), streams, "sampling", (0, 0))
    return egos, build_computation_graphs(egos, settings.k)


def test_encoder_output_shape(community_graph, tiny_settings):
    m = TgaeModel(community_graph.n, community_graph.T, tiny_settings)
    centers = community_graph.temporal_nodes()[:7]
    _, stack = build_batch(community_graph, tiny_settings, VariantFlags(), centers)
    h = encode_batch(m, stack)
    assert h.shape == (7, tiny_settings.d_lat)
    assert h.dtype == torch.float64


def test_encoder_rejects_other_radius(community_graph, tiny_settings):
    m = TgaeModel(community_graph.n, community_graph.T, tiny_settings)
    other = tiny_settings.model_copy(update={"k": 1})
    _, stack = build_batch(community_graph, other, VariantFlags(), community_graph.temporal_nodes()[:3])
    with pytest.raises(ConfigError):
        encode_batch(m, stack)


def test_batch_merge_matches_single_encodings(community_graph, tiny_settings):
    variant = VariantFlags(no_truncation=True)
    m = TgaeModel(community_graph.n, community_graph.T, tiny_settings, variant)
    centers = [TemporalNode(v, t) for v, t in [(1, 1), (2, 1), (3, 2), (11, 2), (21, 3), (31, 3)]]
    egos, stack = build_batch(community_graph, tiny_settings, variant, centers)
    merged = encode_batch(m, stack)
    for i, ego in enumerate(egos):
        alone = encode_batch(m, build_computation_graphs([ego], tiny_settings.k))
        assert torch.allclose(merged[i], alone[0], atol=1e-12)


def test_batch_merge_matches_single_encodings_with_truncation(community_graph):
    settings = ModelSettings(k=2, th=2, n_s=12, d_in=6, d_enc=4, d_lat=5, h_tga=2)
    m = TgaeModel(community_graph.n, community_graph.T, settings)
    centers = community_graph.temporal_nodes()[:12]
    egos, stack = build_batch(community_graph, settings, VariantFlags(), centers)
    merged = encode_batch(m, stack)
    for i, ego in enumerate(egos):
        alone = encode_batch(m, build_computation_graphs([ego], settings.k))
        assert torch.allclose(merged[i], alone[0], atol=1e-9)


def test_one_hot_features_limited():
    with pytest.raises(ConfigError):
        TgaeModel(3000, 1, ModelSettings(one_hot=True))


def test_one_hot_features_width():
    m = TgaeModel(5, 1, ModelSettings(one_hot=True, k=1))
    assert m.all_features().shape == (5, 5)
    assert torch.equal(m.all_features(), torch.eye(5))


def test_reparameterize_zero_sigma_returns_mean():
    mu = torch.tensor([[0.5, -1.0]])
    z = reparameterize(mu, torch.zeros(1, 2), rng=np.random.default_rng(0))
    assert torch.equal(z, mu)


def test_reparameterize_with_fixed_noise():
    z = reparameterize(torch.tensor([1.0]), torch.tensor([2.0]), noise=torch.tensor([0.5]))
    assert torch.equal(z, torch.tensor([2.0]))


def test_reparameterize_statistics():
    mu = torch.ones(100_000)
    sigma = torch.full((100_000,), 2.0)
    z = reparameterize(mu, sigma, rng=np.random.default_rng(7))
    assert abs(z.mean().item() - 1.0) < 0.05
    assert abs(z.std().item() - 2.0) < 0.05


def test_reparameterize_rejects_negative_sigma():
    with pytest.raises(DomainError):
        reparameterize(torch.zeros(2), torch.tensor([1.0, -0.1]), noise=torch.zeros(2))


def test_decoder_inputs_add_latents_along_path():
    a, b = TemporalNode(1, 1), TemporalNode(2, 1)
    ego = EgoGraph(center=a, k=2, levels=((a,), (b,), ()), children={(0, a): (b,), (1, b): ()})
    h = torch.tensor([1.0])
    z = {a: torch.tensor([10.0]), b: torch.tensor([100.0])}
    owners, inputs = _decode_inputs(ego, h, z, 2, literal=True)
    assert owners == [b] and torch.equal(inputs[0], torch.tensor([201.0]))
    owners, inputs = _decode_inputs(ego, h, z, 2, literal=False)
    assert torch.equal(inputs[0], torch.tensor([101.0]))
    owners, inputs = _decode_inputs(ego, h, z, 1, literal=False)
    assert owners == [a] and torch.equal(inputs[0], torch.tensor([11.0]))


def test_decoder_row_counts(community_graph, tiny_settings):
    centers = [TemporalNode(1, 1), TemporalNode(2, 2)]
    for k in (1, 2):
        settings = tiny_settings.model_copy(update={"k": k})
        m = TgaeModel(community_graph.n, community_graph.T, settings)
        egos, stack = build_batch(community_graph, settings, VariantFlags(), centers)
        rows = decode_batch(m, egos, encode_batch(m, stack), np.random.default_rng(0))
        expected = sum(1 if k == 1 else len(ego.children_of(0, ego.center)) for ego in egos)
        assert len(rows) == expected
        if k == 1:
            assert rows.owners == tuple(centers)


def test_decoder_rows_are_distributions(community_graph, tiny_settings):
    m = TgaeModel(community_graph.n, community_graph.T, tiny_settings)
    egos, stack = build_batch(community_graph, tiny_settings, VariantFlags(), community_graph.temporal_nodes()[:10])
    rows, kl = m(egos, stack, np.random.default_rng(1))
    assert rows.probs.shape[1] == community_graph.n
    assert bool((rows.probs >= 0).all())
    assert torch.allclose(rows.probs.sum(dim=1), torch.ones(len(rows)), atol=1e-12)
    assert kl.item() >= 0


def test_non_probabilistic_variant_is_deterministic(community_graph, tiny_settings):
    variant = VariantFlags(non_probabilistic=True)
    m = TgaeModel(community_graph.n, community_graph.T, tiny_settings, variant)
    egos, stack = build_batch(community_graph, tiny_settings, variant, community_graph.temporal_nodes()[:5])
    first, kl = m(egos, stack, np.random.default_rng(1))
    second, _ = m(egos, stack, np.random.default_rng(2))
    assert kl is None
    assert torch.equal(first.log_probs, second.log_probs)


def test_kl_of_standard_normal_is_zero():
    assert kl_term(torch.zeros(3, 4), torch.ones(3, 4)).item() == 0.0


def test_kl_of_shifted_mean():
    assert kl_term(torch.tensor([[1.0]]), torch.tensor([[1.0]])).item() == pytest.approx(0.5)


def test_kl_non_negative():
    rng = torch.Generator().manual_seed(0)
    for _ in range(20):
        mu = torch.randn(5, 3, generator=rng)
        sigma = torch.rand(5, 3, generator=rng) * 3 + 0.01
        assert kl_term(mu, sigma).item() >= 0


def test_loss_zero_for_certain_rows():
    g = TemporalGraph(3, 1, [(1, 2, 1)])
    log_probs = torch.log(torch.tensor([[0.0, 1.0, 0.0]]))
    rows = EdgeProbRows((TemporalNode(1, 1),), log_probs)
    assert approx_loss(rows, g, None, n_s=1).item() == 0.0


def test_loss_of_uniform_rows():
    n = 8
    g = TemporalGraph(n, 1, [(1, 2, 1), (1, 2, 1)])
    rows = EdgeProbRows((TemporalNode(1, 1),), torch.full((1, n), -math.log(n)))
    assert approx_loss(rows, g, None, n_s=1).item() == pytest.approx(math.log(n))


def test_loss_adds_weighted_kl():
    g = TemporalGraph(2, 1, [(1, 2, 1)])
    rows = EdgeProbRows((TemporalNode(1, 1),), torch.log(torch.tensor([[0.5, 0.5]])))
    loss = approx_loss(rows, g, torch.tensor(2.0), n_s=1, kl_weight=0.25)
    assert loss.item() == pytest.approx(math.log(2) + 0.5)


def test_full_batch_loss_is_approx_loss_over_every_center(toy_graph, tiny_settings):
    streams = RandomStreams(3)
    m = init_model(toy_graph, tiny_settings, VariantFlags(), streams)
    expected_egos = sample_egos(
        toy_graph, toy_graph.temporal_nodes(), tiny_settings.sampling(VariantFlags()), streams, "sampling", (0, 0)
    )
    stack = build_computation_graphs(expected_egos, tiny_settings.k)
    rows, kl = m(expected_egos, stack, streams.generator("noise", 0, 0))
    expected = approx_loss(rows, toy_graph, kl, n_s=toy_graph.n * toy_graph.T)
    assert full_batch_loss(m, toy_graph, streams).item() == pytest.approx(expected.item(), abs=1e-12)


def test_batches_per_epoch_example():
    assert batches_per_epoch(10, 3, 5) == 6


def test_batches_per_epoch_covers_every_node_once():
    rng = np.random.default_rng(0)
    for _ in range(10):
        n, T, n_s = (int(x) for x in rng.integers(1, 50, size=3))
        batches = batches_per_epoch(n, T, n_s)
        assert batches * n_s >= n * T
        assert (batches - 1) * n_s < n * T


def test_gradients_reach_every_parameter(community_graph, tiny_settings):
    streams = RandomStreams(4)
    m = init_model(community_graph, tiny_settings, VariantFlags(), streams)
    loss = full_batch_loss(m, community_graph, streams)
    grads = grad(loss, m.parameters())
    for (name, _), g in zip(m.named_parameters(), grads):
        assert torch.isfinite(g).all(), name
        assert g.abs().sum().item() > 0, name


def test_gradients_match_finite_differences(ten_node_graph):
    settings = ModelSettings(k=1, th=3, n_s=4, d_in=3, d_enc=2, d_lat=2, h_tga=1)
    streams = RandomStreams(9)
    m = init_model(ten_node_graph, settings, VariantFlags(), streams)
    egos = sample_egos(
        ten_node_graph, ten_node_graph.temporal_nodes(), settings.sampling(VariantFlags()), streams, "sampling", (0, 0)
    )
    stack = build_computation_graphs(egos, settings.k)
    names = [name for name, _ in m.named_parameters()]
    inputs = tuple(p.detach().clone().requires_grad_(True) for p in m.parameters())

    def loss_of(*params):
        rows, kl = functional_call(m, dict(zip(names, params)), (egos, stack, streams.generator("noise", 0, 0)))
        return approx_loss(rows, ten_node_graph, kl, n_s=len(egos))

    assert torch.autograd.gradcheck(loss_of, inputs, eps=1e-5, atol=1e-6, rtol=1e-4)


def test_training_is_deterministic(toy_graph, tiny_settings, short_training):
    first = train(toy_graph, tiny_settings, VariantFlags(), short_training, seed=3)
    again = train(toy_graph, tiny_settings, VariantFlags(), short_training, seed=3)
    assert first.history == again.history
    for a, b in zip(first.model.parameters(), again.model.parameters()):
        assert torch.equal(a, b)


def test_training_history_per_epoch(toy_graph, tiny_settings, short_training):
    result = train(toy_graph, tiny_settings, VariantFlags(), short_training, seed=1)
    assert [stats.epoch for stats in result.history] == [1, 2]
    assert all(math.isfinite(stats.loss) for stats in result.history)


def test_training_fails_on_non_finite_loss(toy_graph, tiny_settings, short_training, monkeypatch):
    def broken_model(g, settings, variant, streams):
        m = TgaeModel(g.n, g.T, settings, variant)
        with torch.no_grad():
            m.decoder.bias.fill_(float("nan"))
        return m

    monkeypatch.setattr(model_module, "init_model", broken_model)
    with pytest.raises(NumericError):
        train(toy_graph, tiny_settings, VariantFlags(), short_training, seed=0)


def test_training_loss_scaled_by_configured_draws(toy_graph, tiny_settings, short_training, monkeypatch):
    scales = []

    def recording_loss(rows, g, kl, n_s, kl_weight=1.0):
        scales.append(n_s)
        return approx_loss(rows, g, kl, n_s, kl_weight)

    monkeypatch.setattr(model_module, "approx_loss", recording_loss)
    train(toy_graph, tiny_settings, VariantFlags(), short_training, seed=2)
    assert scales and set(scales) == {tiny_settings.n_s}


def test_training_lowers_the_loss():
    g = planted_community_graph(n=30, T=3, communities=3, p_in=0.3, p_out=0.02, seed=7)
    settings = ModelSettings(k=2, th=3, n_s=16, d_in=6, d_enc=4, d_lat=5, h_tga=2)
    improved = 0
    for seed in range(3):
        history = train(g, settings, VariantFlags(), TrainSettings(epochs=50, lr=5e-3), seed).history
        improved += history[49].loss < history[0].loss
    assert improved >= 2


def test_decode_single_ego_graph(community_graph, tiny_settings):
    m = TgaeModel(community_graph.n, community_graph.T, tiny_settings)
    center = TemporalNode(1, 1)
    egos, stack = build_batch(community_graph, tiny_settings, VariantFlags(), [center])
    ego, h = egos[0], encode_batch(m, stack)[0]
    mu, _ = m.latent(torch.tensor([v.node for v in sorted(ego.nodes)], dtype=torch.long))
    z = dict(zip(sorted(ego.nodes), mu))
    rows = decode_ego_graph(m, ego, h, z, tiny_settings.k)
    assert rows.owners == ego.children_of(0, center)
    assert torch.allclose(rows.probs.sum(dim=1), torch.ones(len(rows)), atol=1e-12)
