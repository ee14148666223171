"""Training loop, evaluation, checkpoints and representation export.

Checkpoint layout (little-endian)::

    b"DLFC" | version u32 | count u32 |
    per parameter: name_len u16, name utf-8, rank u32, dims u32*rank, f64 values
"""

from __future__ import annotations

import csv
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import autograd as ag
from .autograd import NumericError
from .config import RunConfig
from .data import Dataset, Sample, batches
from .metrics import MetricReport, class7, compute_metrics, confusion_matrix
from .model import DLFModel, feature_dims_of

logger = logging.getLogger(__name__)

CKPT_MAGIC = b"DLFC"
CKPT_VERSION = 1


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int, batch: int, detail: str):
        self.epoch, self.batch = epoch, batch
        super().__init__(f"training diverged at epoch {epoch}, batch {batch}: {detail}")


class CheckpointError(Exception):
    pass


# -- optimiser ------------------------------------------------------------------


class Adam:
    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8, clip_norm=0.0):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.clip_norm = clip_norm
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self) -> float:
        """Apply one update from the parameters' ``.grad``; returns the pre-clip norm."""
        norm = float(np.sqrt(sum(float(np.sum(p.grad.astype(np.float64) ** 2)) for p in self.params)))
        factor = 1.0
        if self.clip_norm > 0 and norm > self.clip_norm:
            factor = self.clip_norm / norm
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad * factor
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.data.dtype)
        return norm


class EarlyStopping:
    """Track the best (lowest) value; stop after ``patience`` non-improving epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = float("inf")
        self.best_epoch = -1
        self.since_improvement = 0

    def update(self, value: float, epoch: int) -> bool:
        """Record ``value``; True when training should stop."""
        if value < self.best:
            self.best, self.best_epoch = value, epoch
            self.since_improvement = 0
        else:
            self.since_improvement += 1
        return self.since_improvement >= self.patience


# -- evaluation -----------------------------------------------------------------


def predict(model: DLFModel, samples: list[Sample], batch_size: int = 64) -> np.ndarray:
    return np.concatenate([model.predict(b) for b in batches(samples, batch_size, shuffle=False)])


def evaluate(model: DLFModel, samples: list[Sample], batch_size: int = 64) -> MetricReport:
    labels = np.array([s.label for s in samples], dtype=np.float64)
    return compute_metrics(predict(model, samples, batch_size), labels)


def confusion(model: DLFModel, samples: list[Sample], batch_size: int = 64):
    labels = np.array([s.label for s in samples], dtype=np.float64)
    mat, acc, flags = confusion_matrix(predict(model, samples, batch_size), labels)
    return mat, acc, flags


def eval_objective(model: DLFModel, samples: list[Sample], batch_size: int, seed: int = 0) -> dict:
    """Sample-weighted mean of every loss term in evaluation mode."""
    was = model.training
    model.eval()
    totals: dict = {}
    n = 0
    try:
        with ag.no_grad():
            for i, b in enumerate(batches(samples, batch_size, shuffle=False)):
                _, rep = model.objective(b, triplet_seed=seed + i)
                _accumulate(totals, rep.to_dict(), len(b))
                n += len(b)
    finally:
        model.train(was)
    return _divide(totals, n)


def _accumulate(acc: dict, rep: dict, weight: float) -> None:
    for k, v in rep.items():
        if k == "beta":
            acc[k] = v
        elif isinstance(v, dict):
            sub = acc.setdefault(k, {})
            for kk, vv in v.items():
                sub[kk] = sub.get(kk, 0.0) + weight * vv
        else:
            acc[k] = acc.get(k, 0.0) + weight * v


def _divide(acc: dict, n: float) -> dict:
    out = {}
    for k, v in acc.items():
        if k == "beta":
            out[k] = v
        elif isinstance(v, dict):
            out[k] = {kk: vv / n for kk, vv in v.items()}
        else:
            out[k] = v / n
    return out


# -- training ---------------------------------------------------------------------


@dataclass
class TrainResult:
    model: DLFModel
    history: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_valid_mae: float = float("inf")
    stopped_early: bool = False


def build_model(config: RunConfig, dataset: Dataset) -> DLFModel:
    return DLFModel(config, feature_dims_of(dataset.dims))


def train(dataset: Dataset, config: RunConfig, seed: int | None = None,
          on_epoch: Callable[[dict], None] | None = None) -> TrainResult:
    """Minimise L_DLF with Adam, selecting the epoch of lowest validation MAE.

    A deterministic function of (dataset, config, seed). The returned model
    holds the parameters of the best validation epoch.
    """
    seed = config.seed if seed is None else seed
    train_split, valid_split = dataset.splits.get("train", []), dataset.splits.get("valid", [])
    if not train_split or not valid_split:
        raise ValueError("training needs non-empty train and valid splits")
    model = DLFModel(config, feature_dims_of(dataset.dims), seed=seed)
    params = model.parameters()
    opt = Adam(params, config.lr, config.adam_beta1, config.adam_beta2, config.adam_eps, config.clip_norm)
    stopper = EarlyStopping(config.patience)
    result = TrainResult(model)
    best_state = model.state()

    for epoch in range(config.max_epochs):
        model.train()
        totals: dict = {}
        seen = 0
        shuffle_seed = int(np.random.default_rng([seed, 2, epoch]).integers(2**31))
        for bi, batch in enumerate(batches(train_split, config.batch_size, seed=shuffle_seed)):
            triplet_seed = int(np.random.default_rng([seed, 3, epoch, bi]).integers(2**31))
            # overflow surfaces as NumericError; numpy's warnings would only repeat it
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    loss, rep = model.objective(batch, triplet_seed=triplet_seed)
                    ag.backward(loss, params)
                    opt.step()
            except NumericError as exc:
                raise DivergenceError(epoch, bi, str(exc)) from exc
            bad = [p.name for p in params if not np.isfinite(p.data).all()]
            if bad:
                raise DivergenceError(epoch, bi, f"non-finite parameter {bad[0]}")
            _accumulate(totals, rep.to_dict(), len(batch))
            seen += len(batch)

        valid = evaluate(model, valid_split)
        record = {"epoch": epoch, "train_loss": _divide(totals, seen), "valid": valid.to_dict()}
        if config.track_train:
            record["train_objective"] = eval_objective(model, train_split, config.batch_size, seed)
            record["train"] = evaluate(model, train_split).to_dict()
        result.history.append(record)
        if on_epoch is not None:
            on_epoch(record)
        logger.info("epoch %d  loss %.4f  valid MAE %.4f", epoch, record["train_loss"]["L_DLF"], valid.mae)

        improved = valid.mae < stopper.best
        stop = stopper.update(valid.mae, epoch)
        if improved:
            best_state = model.state()
        if stop:
            result.stopped_early = True
            break

    model.load_state(best_state)
    model.eval()
    result.best_epoch = stopper.best_epoch
    result.best_valid_mae = stopper.best
    return result


# -- persistence ------------------------------------------------------------------


def save_checkpoint(model: DLFModel, path: str | Path) -> None:
    params = model.parameters()
    parts = [CKPT_MAGIC, struct.pack("<II", CKPT_VERSION, len(params))]
    for p in params:
        raw = p.name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack(f"<I{p.ndim}I", p.ndim, *p.shape))
        parts.append(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != CKPT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}")
    try:
        version, count = struct.unpack_from("<II", raw, 4)
        if version != CKPT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        off = 12
        state = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", raw, off)
            off += 2
            name = raw[off : off + n].decode("utf-8")
            off += n
            (rank,) = struct.unpack_from("<I", raw, off)
            off += 4
            shape = struct.unpack_from(f"<{rank}I", raw, off)
            off += 4 * rank
            size = int(np.prod(shape))
            if off + 8 * size > len(raw):
                raise CheckpointError(f"{path}: truncated at parameter {name!r}")
            state[name] = np.frombuffer(raw, dtype="<f8", count=size, offset=off).reshape(shape).copy()
            off += 8 * size
    except (struct.error, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: truncated or corrupt ({exc})") from None
    if off != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - off} trailing bytes")
    return state


def load_model(config: RunConfig, dataset: Dataset, path: str | Path) -> DLFModel:
    model = build_model(config, dataset)
    try:
        model.load_state(read_checkpoint(path))
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: does not match the configured model ({exc})") from None
    model.eval()
    return model


def append_history(path: str | Path, record: dict) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def export_representations(model: DLFModel, samples: list[Sample], path: str | Path,
                           batch_size: int = 64) -> None:
    """CSV of each sample's fused vector: id,label,class7,f_0..f_{k-1}."""
    rows = []
    for b in batches(samples, batch_size, shuffle=False):
        fused = model.fused_representation(b)
        for sid, y, vec in zip(b.ids, b.labels, fused):
            rows.append((sid, y, vec))
    width = rows[0][2].shape[0]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "label", "class7"] + [f"f_{i}" for i in range(width)])
        for sid, y, vec in rows:
            w.writerow([sid, repr(float(y)), int(class7(y))] + [repr(float(v)) for v in vec])
