"""Disentanglement regularisers: reconstruction, specific, triplet, orthogonality."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor


@dataclass
class LossWeights:
    lambda_r: float = 1.0
    lambda_s: float = 1.0
    lambda_m: float = 0.1
    lambda_o: float = 0.3
    mu: float = 0.2

    def __post_init__(self):
        for name in ("lambda_r", "lambda_s", "lambda_m", "lambda_o", "mu"):
            v = getattr(self, name)
            if not (0.0 <= v < float("inf")):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


@dataclass
class TripletBatch:
    anchors: Tensor | None
    positives: Tensor | None
    negatives: Tensor | None
    count: int


def _zero() -> Tensor:
    return Tensor(0.0)


def _mean_over_modalities(terms: Sequence[Tensor]) -> Tensor:
    if not terms:
        return _zero()
    total = terms[0]
    for t in terms[1:]:
        total = ag.add(total, t)
    return ag.scale(total, 1.0 / len(terms))


def recon_loss(x: Mapping[str, Tensor], x_rec: Mapping[str, Tensor]) -> Tensor:
    """Per-modality mean squared error, averaged over modalities."""
    return _mean_over_modalities([ag.mse(x[m], x_rec[m]) for m in x])


def specific_loss(sp: Mapping[str, Tensor], sp_re: Mapping[str, Tensor]) -> Tensor:
    return _mean_over_modalities([ag.mse(sp[m], sp_re[m]) for m in sp])


def sentiment_bucket(labels) -> np.ndarray:
    """-1 / 0 / +1 by the sign of the label; only an exact 0 is neutral."""
    return np.sign(np.asarray(labels, dtype=np.float64)).astype(int)


def triplet_indices(n_samples: int, n_modalities: int, labels, seed: int) -> np.ndarray:
    """Choose (anchor, positive, negative) rows of a modality-major table.

    Row ``k * n_samples + i`` holds modality ``k`` of sample ``i``. Each
    (sample, modality) anchor gets a positive from a same-bucket sample in a
    different modality and a negative from a different-bucket sample in the
    same modality; anchors lacking either are skipped.
    """
    buckets = sentiment_bucket(labels)
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(n_modalities):
        for i in range(n_samples):
            same = np.flatnonzero(buckets == buckets[i])
            other = np.flatnonzero(buckets != buckets[i])
            if n_modalities < 2 or other.size == 0:
                continue
            pos_mod = rng.choice([j for j in range(n_modalities) if j != k])
            pos = int(rng.choice(same))
            neg = int(rng.choice(other))
            rows.append((k * n_samples + i, pos_mod * n_samples + pos, k * n_samples + neg))
    return np.array(rows, dtype=np.intp).reshape(-1, 3)


def sample_triplets(pooled_shared: Mapping[str, Tensor], labels, seed: int) -> TripletBatch:
    """Form triplets from pooled shared vectors, one (B, d) tensor per modality."""
    mods = list(pooled_shared)
    n = len(labels)
    idx = triplet_indices(n, len(mods), labels, seed)
    if idx.shape[0] == 0:
        return TripletBatch(None, None, None, 0)
    table = ag.concat([pooled_shared[m] for m in mods], axis=0)
    return TripletBatch(
        ag.take(table, idx[:, 0]), ag.take(table, idx[:, 1]), ag.take(table, idx[:, 2]), idx.shape[0]
    )


def triplet_loss(t: TripletBatch, mu: float, metric: str = "distance") -> Tensor:
    """Mean hinge max(0, d(S,P) - d(S,N) + mu) over the triplets; 0 when there are none.

    ``metric="distance"`` uses d = 1 - cos; ``"similarity"`` uses d = cos.
    """
    if t.count == 0:
        return _zero()
    cos_p = ag.cosine_similarity(t.anchors, t.positives)
    cos_n = ag.cosine_similarity(t.anchors, t.negatives)
    if metric == "distance":
        # (1 - cos_p) - (1 - cos_n) = cos_n - cos_p
        margin = ag.sub(cos_n, cos_p)
    elif metric == "similarity":
        margin = ag.sub(cos_p, cos_n)
    else:
        raise ValueError(f"unknown triplet metric {metric!r}")
    return ag.mean(ag.relu(ag.add(margin, mu)))


def ortho_loss(sh: Mapping[str, Tensor], sp: Mapping[str, Tensor], granularity: str = "pooled") -> Tensor:
    """Squared cosine between shared and specific features, averaged.

    ``sh[m]``/``sp[m]`` are (B, N, d); ``pooled`` compares sequence means,
    ``step`` compares every time step.
    """
    terms = []
    for m in sh:
        if granularity == "pooled":
            a, b = ag.mean(sh[m], axis=1), ag.mean(sp[m], axis=1)
        elif granularity == "step":
            a, b = sh[m], sp[m]
        else:
            raise ValueError(f"unknown ortho granularity {granularity!r}")
        c = ag.cosine_similarity(a, b)
        terms.append(ag.mean(ag.mul(c, c)))
    return _mean_over_modalities(terms)


def decouple_loss(lr, ls, lm, lo, w: LossWeights):
    """lambda_r*L_r + lambda_s*L_s + lambda_m*L_m + lambda_o*L_o (tensors or floats)."""
    parts = [(w.lambda_r, lr), (w.lambda_s, ls), (w.lambda_m, lm), (w.lambda_o, lo)]
    if all(isinstance(v, Tensor) for _, v in parts):
        total = ag.scale(parts[0][1], parts[0][0])
        for lam, v in parts[1:]:
            total = ag.add(total, ag.scale(v, lam))
        return total
    return sum(lam * float(v.item() if isinstance(v, Tensor) else v) for lam, v in parts)
