"""Neural building blocks shared by the synthesizers and the action classifier."""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, Tuple

import torch
from torch import nn
from torch.distributions import Normal, kl_divergence

from intentmotion.utils.exceptions import DimensionMismatchError

logger = logging.getLogger(__name__)

LEAKY_SLOPE = 0.01
PE_BASE = 10000.0


class SkipBlock(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.linear = nn.Linear(width, width)
        self.norm = nn.BatchNorm1d(width)
        self.activation = nn.LeakyReLU(LEAKY_SLOPE)

    def pre_activation(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.norm(self.linear(x))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.activation(self.pre_activation(x))


class SkipMLP(nn.Module):
    """Input projection, `depth` skip-connected blocks, output projection."""

    def __init__(self, in_features: int, hidden: int, out_features: int, depth: int = 3):
        super().__init__()
        self.in_features = in_features
        self.input = nn.Linear(in_features, hidden)
        self.activation = nn.LeakyReLU(LEAKY_SLOPE)
        self.blocks = nn.ModuleList([SkipBlock(hidden) for _ in range(depth)])
        self.output = nn.Linear(hidden, out_features)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.in_features:
            raise DimensionMismatchError(
                f"SkipMLP expects {self.in_features} input features, got {x.shape[-1]}",
                expected=(self.in_features,),
                actual=tuple(x.shape),
            )
        h = self.activation(self.input(x))
        for block in self.blocks:
            h = block(h)
        return self.output(h)


def mlp_skip_forward(module: SkipMLP, x: torch.Tensor) -> torch.Tensor:
    return module(x)


def self_attention(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor, heads: int) -> Tuple[torch.Tensor, torch.Tensor]:
    """Multi-head scaled dot-product attention over the token axis (-2).

    Returns the attended values (..., Lq, Dv) and the weights (..., heads, Lq, Lk).
    """
    if q.shape[-1] % heads or k.shape[-1] % heads or v.shape[-1] % heads:
        raise DimensionMismatchError(f"Token widths must be divisible by {heads} heads")
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise DimensionMismatchError(
            f"Incompatible attention shapes q={tuple(q.shape)} k={tuple(k.shape)} v={tuple(v.shape)}"
        )

    def split(tokens: torch.Tensor) -> torch.Tensor:
        *lead, length, width = tokens.shape
        return tokens.reshape(*lead, length, heads, width // heads).transpose(-2, -3)

    qh, kh, vh = split(q), split(k), split(v)
    scores = qh @ kh.transpose(-1, -2) / math.sqrt(qh.shape[-1])
    weights = torch.softmax(scores, dim=-1)
    attended = weights @ vh
    *lead, _, length, width = attended.shape
    return attended.transpose(-2, -3).reshape(*lead, length, heads * width), weights


def sinusoidal_pe(position: int, width: int, dtype: torch.dtype = torch.float64) -> torch.Tensor:
    if width % 2:
        raise DimensionMismatchError(f"Positional encoding width must be even, got {width}")
    exponent = torch.arange(0, width, 2, dtype=dtype) / width
    angles = position / torch.pow(torch.tensor(PE_BASE, dtype=dtype), exponent)
    encoding = torch.zeros(width, dtype=dtype)
    encoding[0::2] = torch.sin(angles)
    encoding[1::2] = torch.cos(angles)
    return encoding


def positional_table(count: int, width: int, dtype: torch.dtype = torch.float64) -> torch.Tensor:
    return torch.stack([sinusoidal_pe(position, width, dtype) for position in range(count)])


@dataclass
class LatentDistribution:
    mu: torch.Tensor
    log_sigma: torch.Tensor

    @property
    def sigma(self) -> torch.Tensor:
        return torch.exp(self.log_sigma)

    @property
    def dim(self) -> int:
        return self.mu.shape[-1]

    @classmethod
    def from_params(cls, params: torch.Tensor) -> "LatentDistribution":
        mu, log_sigma = params.chunk(2, dim=-1)
        return cls(mu=mu, log_sigma=log_sigma)


def reparameterize(dist: LatentDistribution, noise: torch.Tensor) -> torch.Tensor:
    return dist.mu + dist.sigma * noise


def kl_standard_normal(dist: LatentDistribution) -> torch.Tensor:
    posterior = Normal(dist.mu, dist.sigma)
    prior = Normal(torch.zeros_like(dist.mu), torch.ones_like(dist.mu))
    return kl_divergence(posterior, prior).sum(dim=-1)


def make_optimizer(params: Iterable[torch.Tensor], lr: float, betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> torch.optim.Adam:
    return torch.optim.Adam(params, lr=lr, betas=betas, eps=eps)


def adam_step(
    params: Sequence[torch.Tensor],
    grads: Sequence[torch.Tensor],
    optimizer: torch.optim.Adam,
) -> Sequence[torch.Tensor]:
    """Apply one bias-corrected Adam update with explicitly supplied gradients."""
    for param, grad in zip(params, grads):
        param.grad = grad.detach().clone()
    optimizer.step()
    return params


def set_learning_rate(optimizer: torch.optim.Optimizer, lr: float):
    for group in optimizer.param_groups:
        group["lr"] = lr


@dataclass
class PlateauState:
    lr: float
    patience: int = 3
    decay: float = 0.999
    best: float = math.inf
    wait: int = 0
    decays: int = 0


def plateau_scheduler_step(state: PlateauState, metric: float) -> float:
    if not math.isfinite(metric):
        raise ValueError(f"Scheduler metric must be finite, got {metric}")
    if metric < state.best:
        state.best = metric
        state.wait = 0
        return state.lr
    state.wait += 1
    if state.wait >= state.patience:
        state.lr *= state.decay
        state.wait = 0
        state.decays += 1
        logger.debug(f"Plateau reached, learning rate decayed to {state.lr:.6g}")
    return state.lr


def gradient_check(fn: Callable, inputs: Tuple[torch.Tensor, ...], eps: float = 1e-5, rtol: float = 1e-4, atol: float = 1e-6) -> bool:
    return torch.autograd.gradcheck(fn, inputs, eps=eps, atol=atol, rtol=rtol)
