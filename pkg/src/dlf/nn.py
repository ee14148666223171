"""Layers built on the autograd primitives.

Sequences are batched as (B, N, d) throughout.
"""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import autograd as ag
from .autograd import Parameter, Tensor


def xavier(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape or (fan_in, fan_out))


class Module:
    training = True

    def _children(self) -> Iterator[tuple[str, object]]:
        for key, value in vars(self).items():
            if isinstance(value, (Parameter, Module)):
                yield key, value
            elif isinstance(value, dict):
                for k, v in value.items():
                    if isinstance(v, (Parameter, Module)):
                        yield f"{key}.{k}", v
            elif isinstance(value, list):
                for i, v in enumerate(value):
                    if isinstance(v, (Parameter, Module)):
                        yield f"{key}.{i}", v

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, child in self._children():
            path = f"{prefix}{key}"
            if isinstance(child, Parameter):
                yield path, child
            else:
                yield from child.named_parameters(path + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, child in self._children():
            if isinstance(child, Module):
                yield from child.modules()

    def assign_names(self) -> None:
        seen = set()
        for name, p in self.named_parameters():
            if id(p) in seen:
                continue
            seen.add(id(p))
            p.name = name

    def train(self, mode: bool = True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def set_rng(self, rng: np.random.Generator) -> None:
        for m in self.modules():
            if isinstance(m, Dropout):
                m.rng = rng

    def cast(self, dtype) -> None:
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = np.zeros_like(p.data)

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        self.W = Parameter(xavier(rng, d_in, d_out))
        self.b = Parameter(np.zeros(d_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = ag.matmul(x, self.W)
        return y if self.b is None else ag.add(y, self.b)


class Conv1d(Module):
    """Temporal convolution mapping (B, N, d_in) to (B, N, d_out)."""

    def __init__(self, d_in: int, d_out: int, kernel_size: int, rng: np.random.Generator):
        if kernel_size < 1:
            raise ValueError("kernel_size must be >= 1")
        self.W = Parameter(
            xavier(rng, d_in * kernel_size, d_out, shape=(kernel_size, d_in, d_out))
        )
        self.b = Parameter(np.zeros(d_out))

    def __call__(self, x: Tensor) -> Tensor:
        return ag.conv1d(x, self.W, self.b)


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5):
        self.gamma = Parameter(np.ones(d))
        self.beta = Parameter(np.zeros(d))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return ag.layer_norm(x, self.gamma, self.beta, self.eps)


class Dropout(Module):
    def __init__(self, rate: float):
        self.rate = rate
        self.rng: np.random.Generator | None = None

    def __call__(self, x: Tensor) -> Tensor:
        return ag.dropout(x, self.rate, self.rng, self.training)


class MultiHeadAttention(Module):
    """Scaled dot-product attention with queries from one sequence and
    keys/values from another (self-attention when both are the same).

    The most recent attention map is kept in ``last_attention`` with shape
    (B, heads, N_query, N_source).
    """

    def __init__(self, d: int, heads: int, rng: np.random.Generator):
        if heads < 1 or d % heads:
            raise ValueError(f"model dim {d} not divisible by {heads} heads")
        self.heads = heads
        self.W_q = Parameter(xavier(rng, d, d))
        self.b_q = Parameter(np.zeros(d))
        # no key bias: it shifts every score in a row equally and softmax cancels it
        self.W_k = Parameter(xavier(rng, d, d))
        self.W_v = Parameter(xavier(rng, d, d))
        self.b_v = Parameter(np.zeros(d))
        self.W_o = Parameter(xavier(rng, d, d))
        self.b_o = Parameter(np.zeros(d))
        self.last_attention: np.ndarray | None = None

    def _split(self, x: Tensor) -> Tensor:
        B, N, d = x.shape
        return ag.transpose(ag.reshape(x, (B, N, self.heads, d // self.heads)), (0, 2, 1, 3))

    def __call__(self, query: Tensor, source: Tensor) -> Tensor:
        if query.ndim != 3 or source.ndim != 3 or query.shape[0] != source.shape[0] \
                or query.shape[2] != self.W_q.shape[0] or source.shape[2] != self.W_k.shape[0]:
            raise ag.ShapeError("attention", query.shape, source.shape)
        B, Nq, d = query.shape
        q = self._split(ag.add(ag.matmul(query, self.W_q), self.b_q))
        k = self._split(ag.matmul(source, self.W_k))
        v = self._split(ag.add(ag.matmul(source, self.W_v), self.b_v))
        scores = ag.scale(ag.matmul(q, ag.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(d // self.heads))
        probs = ag.softmax(scores, axis=-1)
        self.last_attention = probs.data
        ctx = ag.reshape(ag.transpose(ag.matmul(probs, v), (0, 2, 1, 3)), (B, Nq, d))
        return ag.add(ag.matmul(ctx, self.W_o), self.b_o)


class FeedForward(Module):
    def __init__(self, d: int, expansion: int, rng: np.random.Generator):
        self.fc1 = Linear(d, d * expansion, rng)
        self.fc2 = Linear(d * expansion, d, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(ag.relu(self.fc1(x)))


class TransformerBlock(Module):
    """Pre-norm self-attention block: x + Attn(LN(x)), then x + FFN(LN(x))."""

    def __init__(self, d: int, heads: int, expansion: int, dropout: float, rng: np.random.Generator):
        self.norm1 = LayerNorm(d)
        self.attn = MultiHeadAttention(d, heads, rng)
        self.norm2 = LayerNorm(d)
        self.ffn = FeedForward(d, expansion, rng)
        self.drop = Dropout(dropout)

    def __call__(self, x: Tensor) -> Tensor:
        h = self.norm1(x)
        x = ag.add(x, self.drop(self.attn(h, h)))
        return ag.add(x, self.drop(self.ffn(self.norm2(x))))


class TransformerEncoder(Module):
    """A stack of ``depth`` pre-norm blocks; depth 0 is the identity."""

    def __init__(self, d: int, depth: int, heads: int, expansion: int, dropout: float,
                 rng: np.random.Generator):
        self.layers = [TransformerBlock(d, heads, expansion, dropout, rng) for _ in range(depth)]

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x


def sinusoidal_positions(length: int, d: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def mean_pool(x: Tensor) -> Tensor:
    """Average over the sequence axis: (B, N, d) -> (B, d)."""
    return ag.mean(x, axis=1)
