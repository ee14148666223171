"""Language-focused attractor: language-query cross-attention branches."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .nn import Dropout, FeedForward, LayerNorm, Linear, Module, MultiHeadAttention, mean_pool, sinusoidal_positions


@dataclass
class LfaOutput:
    streams: dict[str, Tensor]  # branch -> (B, N_query, d)
    high: dict[str, Tensor]  # branch -> (B, d)


class MultimodalLayer(Module):
    """Post-norm cross-attention layer.

    h1 = LN(h + Drop(MCA(h, source)));  out = LN(h1 + FFN(h1))
    """

    def __init__(self, d: int, heads: int, expansion: int, dropout: float, rng: np.random.Generator):
        self.mca = MultiHeadAttention(d, heads, rng)
        self.norm1 = LayerNorm(d)
        self.ffn = FeedForward(d, expansion, rng)
        self.norm2 = LayerNorm(d)
        self.drop = Dropout(dropout)

    def __call__(self, stream: Tensor, source: Tensor) -> Tensor:
        h = self.norm1(ag.add(stream, self.drop(self.mca(stream, source))))
        return self.norm2(ag.add(h, self.ffn(h)))


class Branch(Module):
    def __init__(self, d, depth, heads, expansion, dropout, rng):
        self.layers = [MultimodalLayer(d, heads, expansion, dropout, rng) for _ in range(depth)]
        self.out = Linear(d, d, rng)

    def __call__(self, stream: Tensor, source: Tensor) -> tuple[Tensor, Tensor]:
        for layer in self.layers:
            stream = layer(stream, source)
        return stream, self.out(mean_pool(stream))


class LanguageFocusedAttractor(Module):
    """One branch per modality; every branch's query stream starts from the
    anchor modality (language when present) and its keys/values come from
    that branch's own specific features at every layer.

    With ``separate_queries=True`` each branch instead queries with its own
    modality over the concatenated other modalities.
    """

    def __init__(self, modalities: str, d: int, depth: int, heads: int, expansion: int,
                 dropout: float, rng: np.random.Generator, pos_embed_sources: bool = True,
                 separate_queries: bool = False):
        self.modalities = modalities
        self.anchor = "L" if "L" in modalities else modalities[0]
        self.d = d
        self.pos_embed_sources = pos_embed_sources
        self.separate_queries = separate_queries
        self.embed_drop = Dropout(dropout)
        self.branches = {m: Branch(d, depth, heads, expansion, dropout, rng) for m in modalities}

    def _embed(self, x: Tensor) -> Tensor:
        pe = sinusoidal_positions(x.shape[1], self.d)
        return ag.add(x, Tensor(pe, dtype=x.data.dtype))

    def __call__(self, sp: dict[str, Tensor], separate_queries: bool | None = None) -> LfaOutput:
        if separate_queries is None:
            separate_queries = self.separate_queries
        missing = [m for m in self.modalities if m not in sp]
        if missing:
            raise ValueError(f"attractor needs every modality; missing {', '.join(missing)}")
        if self.pos_embed_sources:
            sources = {m: self.embed_drop(self._embed(sp[m])) for m in self.modalities}
        else:
            sources = {m: self.embed_drop(sp[m]) for m in self.modalities}
        if separate_queries:
            queries = {m: self.embed_drop(self._embed(sp[m])) for m in self.modalities}
        else:
            anchor_query = self.embed_drop(self._embed(sp[self.anchor]))
        streams, high = {}, {}
        for m in self.modalities:
            if separate_queries:
                query = queries[m]
                others = [sources[o] for o in self.modalities if o != m] or [sources[m]]
                source = others[0] if len(others) == 1 else ag.concat(others, axis=1)
            else:
                query, source = anchor_query, sources[m]
            streams[m], high[m] = self.branches[m](query, source)
        return LfaOutput(streams, high)

    def attention_maps(self) -> list[np.ndarray]:
        return [layer.mca.last_attention for b in self.branches.values() for layer in b.layers
                if layer.mca.last_attention is not None]


def lfa_forward(attractor: LanguageFocusedAttractor, sp: dict[str, Tensor]) -> LfaOutput:
    """Every branch queries with the anchor (language) stream."""
    return attractor(sp, separate_queries=False)


def ablate_lfa_separate_queries(attractor: LanguageFocusedAttractor, sp: dict[str, Tensor]) -> LfaOutput:
    """Each branch queries with its own modality over the other modalities."""
    return attractor(sp, separate_queries=True)
