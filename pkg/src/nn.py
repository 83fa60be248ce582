"""Dense building blocks: MLPs, the temporal graph attention layer, gradient
helper and the Adam optimizer wrapper. Everything runs in float64."""

from typing import Iterable, Optional, Sequence

import torch
from torch import nn
from torch.nn import functional as F

from src.errors import InvariantError, ShapeError, UsageError
from src.logging_config import logger
from src.sampler import MessagePlan

torch.set_default_dtype(torch.float64)

LEAKY_SLOPE = 0.2

ACTIVATIONS = {
    "elu": F.elu,
    "relu": F.relu,
    "tanh": torch.tanh,
    "identity": lambda x: x,
}


def activation(tag: str):
    try:
        return ACTIVATIONS[tag]
    except KeyError as e:
        raise UsageError(f"unknown activation '{tag}'") from e


def reset_linear(layer: nn.Linear):
    nn.init.xavier_uniform_(layer.weight)
    if layer.bias is not None:
        nn.init.zeros_(layer.bias)


class Mlp(nn.Module):
    """Affine layers each followed by its own activation tag."""

    def __init__(self, sizes: Sequence[int], activations: Sequence[str]):
        super().__init__()
        if len(sizes) < 2 or len(activations) != len(sizes) - 1:
            raise ShapeError(f"{len(sizes)} sizes need {len(sizes) - 1} activations, got {len(activations)}")
        self.sizes = tuple(sizes)
        self.activations = tuple(activations)
        self.linears = nn.ModuleList(nn.Linear(a, b) for a, b in zip(sizes[:-1], sizes[1:]))
        for layer in self.linears:
            reset_linear(layer)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.sizes[0]:
            raise ShapeError(f"MLP expects input width {self.sizes[0]}, got {x.shape[-1]}")
        for layer, tag in zip(self.linears, self.activations):
            x = activation(tag)(layer(x))
        return x


class TgaLayer(nn.Module):
    """Multi-head temporal graph attention over one message plan.

    A shared projection maps inputs to d_enc; head i scores message v -> u with
    LeakyReLU(a_i . [z_u || z_v]), softmax-normalizes over u's in-edges,
    aggregates the projected source vectors and applies the activation. Heads
    are concatenated and mapped to d_att by W_o.
    """

    def __init__(self, d_in: int, d_enc: int, d_att: int, heads: int, activation_tag: str = "elu"):
        super().__init__()
        if heads < 1:
            raise UsageError("attention needs at least one head")
        self.d_in = d_in
        self.d_enc = d_enc
        self.heads = heads
        self.activation_tag = activation_tag
        self.proj = nn.Linear(d_in, d_enc, bias=False)
        self.attn = nn.Parameter(torch.empty(heads, 2 * d_enc))
        self.out = nn.Linear(heads * d_enc, d_att, bias=False)
        nn.init.xavier_uniform_(self.proj.weight)
        nn.init.xavier_uniform_(self.attn)
        nn.init.xavier_uniform_(self.out.weight)

    def attention(self, z: torch.Tensor, src: torch.Tensor, dst: torch.Tensor, num_targets: int) -> torch.Tensor:
        """Per-edge, per-head attention weights (edges x heads)."""
        a_dst, a_src = self.attn[:, : self.d_enc], self.attn[:, self.d_enc :]
        logits = F.leaky_relu(z[dst] @ a_dst.T + z[src] @ a_src.T, LEAKY_SLOPE)
        index = dst.unsqueeze(1).expand(-1, self.heads)
        peak = torch.full((num_targets, self.heads), float("-inf"), dtype=logits.dtype)
        peak = peak.scatter_reduce(0, index, logits.detach(), reduce="amax", include_self=True)
        weights = torch.exp(logits - peak[dst])
        denominator = torch.zeros(num_targets, self.heads, dtype=logits.dtype).index_add_(0, dst, weights)
        return weights / denominator[dst]

    def forward(
        self, h: torch.Tensor, plan: MessagePlan, return_attention: bool = False
    ) -> torch.Tensor | tuple[torch.Tensor, torch.Tensor]:
        if h.shape[0] != plan.num_inputs or h.shape[1] != self.d_in:
            raise ShapeError(f"attention input is {tuple(h.shape)}, expected ({plan.num_inputs}, {self.d_in})")
        src = torch.as_tensor(plan.src_slots, dtype=torch.long)
        dst = torch.as_tensor(plan.dst_slots, dtype=torch.long)
        incoming = torch.bincount(dst, minlength=plan.num_targets)
        if plan.num_targets and int(incoming.min()) == 0:
            logger.critical("Attention target without in-edges in a message plan")
            raise InvariantError("every attention target needs at least one in-edge")

        z = self.proj(h)
        alpha = self.attention(z, src, dst, plan.num_targets)
        messages = alpha.unsqueeze(-1) * z[src].unsqueeze(1)
        pooled = torch.zeros(plan.num_targets, self.heads, self.d_enc, dtype=z.dtype).index_add_(0, dst, messages)
        heads = activation(self.activation_tag)(pooled).reshape(plan.num_targets, self.heads * self.d_enc)
        result = self.out(heads)
        if return_attention:
            return result, alpha
        return result


def grad(loss: torch.Tensor, params: Iterable[torch.Tensor]) -> list[torch.Tensor]:
    """Reverse-mode gradients of a scalar loss, zeros where it does not depend
    on a parameter."""
    params = list(params)
    if loss.numel() != 1:
        raise UsageError(f"gradients need a scalar loss, got shape {tuple(loss.shape)}")
    if not loss.requires_grad:
        return [torch.zeros_like(p) for p in params]
    found = torch.autograd.grad(loss, params, allow_unused=True)
    return [torch.zeros_like(p) if g is None else g for p, g in zip(params, found)]


def build_optimizer(
    params: Iterable[torch.Tensor],
    lr: float = 1e-3,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> torch.optim.Adam:
    return torch.optim.Adam(params, lr=lr, betas=betas, eps=eps)


def adam_step(optimizer: torch.optim.Adam, params: Sequence[torch.Tensor], grads: Sequence[torch.Tensor]):
    """Applies one bias-corrected Adam update with the given gradients."""
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameters but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {tuple(g.shape)} does not match parameter {tuple(p.shape)}")
        p.grad = g.detach().clone()
    optimizer.step()


def adam_steps_taken(optimizer: torch.optim.Adam, param: torch.Tensor) -> Optional[int]:
    state = optimizer.state.get(param)
    if not state:
        return 0
    return int(state["step"])
