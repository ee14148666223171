"""Shared pathway, multimodal fusion, prediction heads and the MSA losses."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .nn import Dropout, Linear, Module, TransformerBlock, mean_pool


class SharedPathway(Module):
    """Time-concatenated shared features -> one transformer block -> mean
    pool -> two fully connected layers, giving the high-level shared vector."""

    def __init__(self, d: int, heads: int, expansion: int, dropout: float, rng: np.random.Generator):
        self.block = TransformerBlock(d, heads, expansion, dropout, rng)
        self.fc1 = Linear(d, d, rng)
        self.fc2 = Linear(d, d, rng)

    def __call__(self, sh: Mapping[str, Tensor]) -> Tensor:
        seq = ag.concat(list(sh.values()), axis=1)
        pooled = mean_pool(self.block(seq))
        return self.fc2(ag.relu(self.fc1(pooled)))


def fuse(hsp: Mapping[str, Tensor], hsh: Tensor) -> Tensor:
    """Concatenate (HSp^L, HSp^V, HSp^A, HSh) along the feature axis.

    ``hsp`` must already be in L, V, A order; absent modalities are skipped.
    """
    return ag.concat([*hsp.values(), hsh], axis=-1)


class PredictionHeads(Module):
    def __init__(self, modalities: str, d: int, dropout: float, rng: np.random.Generator):
        width = (len(modalities) + 1) * d
        self.final1 = Linear(width, d, rng)
        self.final_drop = Dropout(dropout)
        self.final2 = Linear(d, 1, rng)
        self.shared = Linear(d, 1, rng)
        self.specific = {m: Linear(d, 1, rng) for m in modalities}

    def __call__(self, fused: Tensor, hsh: Tensor, hsp: Mapping[str, Tensor]) -> "Predictions":
        hidden = self.final_drop(ag.relu(self.final1(fused)))
        final = self.final2(hidden)
        n = fused.shape[0]
        return Predictions(
            final=ag.reshape(final, (n,)),
            shared=ag.reshape(self.shared(hsh), (n,)),
            specific={m: ag.reshape(self.specific[m](hsp[m]), (n,)) for m in hsp},
        )


@dataclass
class Predictions:
    final: Tensor
    shared: Tensor
    specific: dict[str, Tensor]

    def count(self) -> int:
        return 2 + len(self.specific)


@dataclass
class LossReport:
    L_r: float = 0.0
    L_s: float = 0.0
    L_m: float = 0.0
    L_o: float = 0.0
    L_d: float = 0.0
    L_f: float = 0.0
    L_Sh: float = 0.0
    L_Sp: dict[str, float] = field(default_factory=dict)
    L_MSA: float = 0.0
    L_DLF: float = 0.0
    beta: dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def msa_loss(preds: Predictions, labels, beta_f: float, beta_sh: float,
             beta_sp: Mapping[str, float]) -> tuple[Tensor, dict[str, Tensor]]:
    """Mean absolute error of every head and their weighted total.

    Returns (L_MSA, {"f": L_f, "Sh": L_Sh, "Sp_L": ..., ...}).
    """
    y = np.asarray(labels, dtype=preds.final.data.dtype)
    if y.size == 0:
        raise ValueError("msa_loss needs at least one sample")
    y = Tensor(y)
    terms = {"f": ag.mae(preds.final, y), "Sh": ag.mae(preds.shared, y)}
    total = ag.add(ag.scale(terms["f"], beta_f), ag.scale(terms["Sh"], beta_sh))
    for m, p in preds.specific.items():
        terms[f"Sp_{m}"] = ag.mae(p, y)
        total = ag.add(total, ag.scale(terms[f"Sp_{m}"], beta_sp[m]))
    return total, terms


def total_objective(l_d, l_msa):
    """L_DLF = L_d + L_MSA."""
    if isinstance(l_d, Tensor) or isinstance(l_msa, Tensor):
        return ag.add(l_d, l_msa)
    return l_d + l_msa
