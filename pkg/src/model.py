"""The temporal graph autoencoder: attention encoder over bipartite stacks,
variational ego-graph decoder, losses and the mini-batch training loop."""

import math
import time
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Optional, Sequence

import numpy as np
import torch
from torch import nn
from tqdm import trange

from src.errors import ConfigError, DomainError, NumericError, ShapeError
from src.logging_config import logger
from src.nn import Mlp, TgaLayer, adam_step, build_optimizer, grad, reset_linear
from src.rng import RandomStreams
from src.sampler import (
    BipartiteStack,
    EgoGraph,
    build_computation_graphs,
    initial_node_probabilities,
    sample_egos,
    sample_initial_nodes,
)
from src.settings import ONE_HOT_MAX_NODES, ModelSettings, TrainSettings, VariantFlags
from src.tgraph import TemporalGraph, TemporalNode

SIGMA_MIN = 1e-6
SIGMA_MAX = 1e3


class TgaeModel(nn.Module):
    """All learnable parameters of the autoencoder for one graph shape.

    Node identity features are shared across timestamps: either a trainable
    embedding table or a fixed one-hot table.
    """

    def __init__(self, n: int, T: int, settings: ModelSettings, variant: VariantFlags = VariantFlags()):
        super().__init__()
        self.n = n
        self.T = T
        self.settings = settings
        self.variant = variant
        d_in = settings.d_in
        if settings.one_hot:
            if n > ONE_HOT_MAX_NODES:
                raise ConfigError(f"one-hot features support at most {ONE_HOT_MAX_NODES} nodes, graph has {n}")
            d_in = n
            self.register_buffer("one_hot", torch.eye(n, dtype=torch.float64), persistent=False)
            self.embedding = None
        else:
            self.embedding = nn.Embedding(n, d_in)
            nn.init.xavier_uniform_(self.embedding.weight)
        self.d_in = d_in
        self.layers = nn.ModuleList(
            TgaLayer(d_in if i == 0 else settings.d_lat, settings.d_enc, settings.d_lat, settings.h_tga, settings.activation)
            for i in range(settings.k)
        )
        self.mlp_mu = Mlp([d_in, settings.d_enc, settings.d_lat], ("elu", "identity"))
        self.mlp_logvar = Mlp([d_in, settings.d_enc, settings.d_lat], ("elu", "identity"))
        self.decoder = nn.Linear(settings.d_lat, n)
        reset_linear(self.decoder)
        self.double()

    @property
    def k(self) -> int:
        return self.settings.k

    def features(self, node_ids: torch.Tensor) -> torch.Tensor:
        """Feature rows for 1-based node ids."""
        index = node_ids - 1
        if self.embedding is None:
            return self.one_hot[index]
        return self.embedding(index)

    def all_features(self) -> torch.Tensor:
        return self.features(torch.arange(1, self.n + 1))

    def latent(self, node_ids: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Mean and clamped standard deviation of the latent for each node."""
        x = self.features(node_ids)
        mu = self.mlp_mu(x)
        sigma = torch.exp(0.5 * self.mlp_logvar(x)).clamp(SIGMA_MIN, SIGMA_MAX)
        return mu, sigma

    def forward(
        self, egos: Sequence[EgoGraph], stack: BipartiteStack, noise_rng: Optional[np.random.Generator]
    ) -> tuple["EdgeProbRows", Optional[torch.Tensor]]:
        """Decoded rows for a batch plus the KL term over the full feature table."""
        h = encode_batch(self, stack)
        rows = decode_batch(self, egos, h, noise_rng)
        kl = None
        if not self.variant.non_probabilistic:
            mu, sigma = self.latent(torch.arange(1, self.n + 1))
            kl = kl_term(mu, sigma)
        return rows, kl


@dataclass(frozen=True)
class EdgeProbRow:
    owner: TemporalNode
    log_probs: torch.Tensor

    @property
    def probs(self) -> torch.Tensor:
        return self.log_probs.exp()


@dataclass(frozen=True)
class EdgeProbRows:
    """Categorical edge distributions, one row per owning temporal node."""

    owners: tuple[TemporalNode, ...]
    log_probs: torch.Tensor

    def __len__(self):
        return len(self.owners)

    def __getitem__(self, i: int) -> EdgeProbRow:
        return EdgeProbRow(self.owners[i], self.log_probs[i])

    @property
    def probs(self) -> torch.Tensor:
        return self.log_probs.exp()

    @classmethod
    def concat(cls, parts: Sequence["EdgeProbRows"], n: int) -> "EdgeProbRows":
        if not parts:
            return cls((), torch.zeros(0, n))
        owners = tuple(o for part in parts for o in part.owners)
        return cls(owners, torch.cat([part.log_probs for part in parts]))


def encode_batch(m: TgaeModel, stack: BipartiteStack) -> torch.Tensor:
    """Runs the k attention layers from the outermost level to the centers."""
    if stack.k != m.k:
        logger.error("Stack built for k=%d fed to a k=%d model", stack.k, m.k)
        raise ConfigError(f"computation graphs have {stack.k} layers, model has {m.k}")
    if not stack.centers:
        return torch.zeros(0, m.settings.d_lat)
    node_ids = torch.tensor([v.node for v in stack.slot_nodes], dtype=torch.long)
    h = m.features(node_ids)
    for j, layer in enumerate(m.layers, start=1):
        h = layer(h, stack.message_plan(j))
    return h


def reparameterize(
    mu: torch.Tensor,
    sigma: torch.Tensor,
    rng: Optional[np.random.Generator] = None,
    noise: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """Z = mu + sigma * eps with eps standard normal (drawn from rng unless given)."""
    if mu.shape != sigma.shape:
        raise ShapeError(f"mu {tuple(mu.shape)} and sigma {tuple(sigma.shape)} differ")
    if bool((sigma < 0).any()):
        raise DomainError("sigma must be non-negative")
    if noise is None:
        if rng is None:
            raise ValueError("reparameterize needs either rng or noise")
        noise = torch.from_numpy(rng.standard_normal(tuple(mu.shape)))
    return mu + sigma * noise


def _decode_inputs(
    ego: EgoGraph, h_center: torch.Tensor, z: Mapping[TemporalNode, torch.Tensor], k: int, literal: bool
) -> tuple[list[TemporalNode], list[torch.Tensor]]:
    owners, inputs = [], []
    for path in ego.paths(k - 1):
        h = h_center
        for v in path:
            h = h + z[v]
        leaf = path[-1] if path else ego.center
        # the leaf call adds its own latent once more
        if literal or not path:
            h = h + z[leaf]
        owners.append(leaf)
        inputs.append(h)
    return owners, inputs


def decode_ego_graph(
    m: TgaeModel, ego: EgoGraph, h_center: torch.Tensor, z: Mapping[TemporalNode, torch.Tensor], k: int
) -> EdgeProbRows:
    """Emits one categorical row per (k-1)-step child path of the ego center,
    owned by the path's last node."""
    owners, inputs = _decode_inputs(ego, h_center, z, k, m.settings.literal_double_add)
    if not inputs:
        return EdgeProbRows((), torch.zeros(0, m.n))
    logits = m.decoder(torch.stack(inputs))
    return EdgeProbRows(tuple(owners), torch.log_softmax(logits, dim=-1))


def decode_batch(
    m: TgaeModel, egos: Sequence[EgoGraph], h: torch.Tensor, noise_rng: Optional[np.random.Generator]
) -> EdgeProbRows:
    """Decodes every ego of a batch; latents are drawn per (ego, node)."""
    pairs = [(i, v) for i, ego in enumerate(egos) for v in sorted(ego.nodes)]
    if not pairs:
        return EdgeProbRows((), torch.zeros(0, m.n))
    mu, sigma = m.latent(torch.tensor([v.node for _, v in pairs], dtype=torch.long))
    if m.variant.non_probabilistic:
        z_all = mu
    else:
        z_all = reparameterize(mu, sigma, rng=noise_rng)
    latents: list[dict[TemporalNode, torch.Tensor]] = [{} for _ in egos]
    for row, (i, v) in enumerate(pairs):
        latents[i][v] = z_all[row]

    owners, inputs = [], []
    for i, ego in enumerate(egos):
        o, x = _decode_inputs(ego, h[i], latents[i], m.k, m.settings.literal_double_add)
        owners.extend(o)
        inputs.extend(x)
    if not inputs:
        return EdgeProbRows((), torch.zeros(0, m.n))
    logits = m.decoder(torch.stack(inputs))
    return EdgeProbRows(tuple(owners), torch.log_softmax(logits, dim=-1))


def kl_term(mu: torch.Tensor, sigma: torch.Tensor) -> torch.Tensor:
    """KL(N(mu, sigma^2) || N(0, I)) summed over dimensions, averaged over rows."""
    if mu.shape != sigma.shape:
        raise ShapeError(f"mu {tuple(mu.shape)} and sigma {tuple(sigma.shape)} differ")
    sigma = sigma.clamp(min=SIGMA_MIN)
    per_row = 0.5 * (mu.pow(2) + sigma.pow(2) - 1 - 2 * torch.log(sigma)).sum(dim=-1)
    return per_row.mean()


def approx_loss(
    rows: EdgeProbRows,
    g: TemporalGraph,
    kl: Optional[torch.Tensor],
    n_s: int,
    kl_weight: float = 1.0,
) -> torch.Tensor:
    """Negative log-likelihood of each row owner's observed out-neighbors,
    scaled by 1/n_s, plus the weighted KL term when one is given.

    n_s is the number of initial draws, duplicates included.
    """
    row_index, col_index = [], []
    for r, owner in enumerate(rows.owners):
        for v in sorted(set(g.out_neighbors(owner))):
            row_index.append(r)
            col_index.append(v - 1)
    if row_index:
        picked = rows.log_probs[torch.tensor(row_index), torch.tensor(col_index)]
        loss = -picked.sum() / n_s
    else:
        loss = rows.log_probs.sum() * 0.0
    if kl is not None:
        loss = loss + kl_weight * kl
    return loss


def batches_per_epoch(n: int, T: int, n_s: int) -> int:
    return math.ceil(n * T / n_s)


def full_batch_loss(
    m: TgaeModel,
    g: TemporalGraph,
    streams: RandomStreams,
    epoch: int = 0,
    kl_weight: float = 1.0,
    threads: int = 1,
) -> torch.Tensor:
    """Objective over every temporal node as an ego center, scaled by 1/(nT)."""
    centers = g.temporal_nodes()
    sampling = m.settings.sampling(m.variant)
    egos = sample_egos(g, centers, sampling, streams, "sampling", (epoch, 0), threads)
    stack = build_computation_graphs(egos, m.k)
    rows, kl = m(egos, stack, streams.generator("noise", epoch, 0))
    return approx_loss(rows, g, kl, n_s=g.n * g.T, kl_weight=kl_weight)


class EpochStats(NamedTuple):
    epoch: int
    loss: float
    kl: float


class TrainingResult(NamedTuple):
    model: TgaeModel
    history: list[EpochStats]


def init_model(g: TemporalGraph, settings: ModelSettings, variant: VariantFlags, streams: RandomStreams) -> TgaeModel:
    with torch.random.fork_rng():
        torch.manual_seed(streams.seed_int("init"))
        return TgaeModel(g.n, g.T, settings, variant)


def train(
    g: TemporalGraph,
    settings: ModelSettings,
    variant: VariantFlags,
    train_settings: TrainSettings,
    seed: int,
    threads: int = 1,
) -> TrainingResult:
    """Mini-batch training: ceil(nT/n_s) steps per epoch, each sampling initial
    nodes, their ego-graphs, and taking one Adam step on the approximate loss."""
    streams = RandomStreams(seed)
    model = init_model(g, settings, variant, streams)
    params = list(model.parameters())
    optimizer = build_optimizer(
        params, lr=train_settings.lr, betas=(train_settings.beta1, train_settings.beta2), eps=train_settings.eps
    )
    sampling = settings.sampling(variant)
    probabilities = initial_node_probabilities(g, sampling.strategy, sampling.t_n)
    steps = batches_per_epoch(g.n, g.T, sampling.n_s)
    logger.info(
        "Training on n=%d, T=%d, m=%d: %d epochs x %d batches (k=%d, th=%s, n_s=%d)",
        g.n, g.T, g.m, train_settings.epochs, steps, sampling.k, sampling.th, sampling.n_s,
    )

    history: list[EpochStats] = []
    started = time.perf_counter()
    for epoch in trange(1, train_settings.epochs + 1, disable=not train_settings.progress, desc="epochs"):
        losses, kls = [], []
        for batch in range(steps):
            drawn = sample_initial_nodes(g, sampling, streams.generator("initial", epoch, batch), probabilities)
            centers = list(dict.fromkeys(drawn))
            egos = sample_egos(g, centers, sampling, streams, "sampling", (epoch, batch), threads)
            stack = build_computation_graphs(egos, settings.k)
            rows, kl = model(egos, stack, streams.generator("noise", epoch, batch))
            loss = approx_loss(rows, g, kl, n_s=sampling.n_s, kl_weight=train_settings.kl_weight)
            if not torch.isfinite(loss):
                logger.critical("Non-finite loss at epoch %d, batch %d", epoch, batch)
                raise NumericError(f"loss became {loss.item()} at epoch {epoch}, batch {batch}")
            adam_step(optimizer, params, grad(loss, params))
            losses.append(loss.item())
            kls.append(0.0 if kl is None else kl.item())
            logger.debug("epoch %d batch %d: loss=%.6f rows=%d", epoch, batch, losses[-1], len(rows))
        history.append(EpochStats(epoch, float(np.mean(losses)), float(np.mean(kls))))
        logger.info("Epoch %d/%d: loss=%.6f kl=%.6f", epoch, train_settings.epochs, history[-1].loss, history[-1].kl)
    logger.info("Training finished in %.2fs", time.perf_counter() - started)
    return TrainingResult(model, history)
