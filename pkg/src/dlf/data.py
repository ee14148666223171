"""Datasets of (language, vision, audio) feature sequences with sentiment labels.

Binary split container layout (little-endian)::

    b"DLF1" | version u32 | count u32 |
    per sample: id_len u16, id utf-8, label f32,
                for L, V, A: N u32, d u32, N*d f32 row-major

``meta.json`` declares per-modality (length, dim), the split file names and
the label range. Split files ending in ``.jsonl`` are read as one JSON
object per line: ``{"id": ..., "label": ..., "L": [[...]], "V": ..., "A": ...}``.
"""

from __future__ import annotations

import enum
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

logger = logging.getLogger(__name__)

MAGIC = b"DLF1"
VERSION = 1
LABEL_RANGE = (-3.0, 3.0)
SPLITS = ("train", "valid", "test")


class Modality(str, enum.Enum):
    L = "L"
    V = "V"
    A = "A"


MODALITIES = (Modality.L.value, Modality.V.value, Modality.A.value)


class DataError(Exception):
    pass


class FormatError(DataError):
    pass


class CorruptError(DataError):
    pass


class SchemaError(DataError):
    pass


@dataclass
class Sample:
    id: str
    features: dict[str, np.ndarray]
    label: float

    def __post_init__(self):
        if not LABEL_RANGE[0] <= self.label <= LABEL_RANGE[1]:
            raise ValueError(f"label {self.label} outside {LABEL_RANGE}")


@dataclass
class Dataset:
    splits: dict[str, list[Sample]]
    dims: dict[str, tuple[int, int]]  # modality -> (length, dim)
    clamped: int = 0

    def __post_init__(self):
        seen: set[str] = set()
        for name, samples in self.splits.items():
            for s in samples:
                if s.id in seen:
                    raise SchemaError(f"sample id {s.id!r} appears in more than one split")
                seen.add(s.id)
                for m in MODALITIES:
                    if s.features[m].shape != self.dims[m]:
                        raise SchemaError(
                            f"{name}/{s.id}: modality {m} has shape "
                            f"{s.features[m].shape}, expected {self.dims[m]}"
                        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset) or self.dims != other.dims:
            return False
        if self.splits.keys() != other.splits.keys():
            return False
        for name in self.splits:
            a, b = self.splits[name], other.splits[name]
            if len(a) != len(b):
                return False
            for x, y in zip(a, b):
                if x.id != y.id or x.label != y.label:
                    return False
                if any(not np.array_equal(x.features[m], y.features[m]) for m in MODALITIES):
                    return False
        return True


@dataclass
class Batch:
    ids: list[str]
    features: dict[str, np.ndarray]  # modality -> (B, N_m, d_m)
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)


def _fit_length(x: np.ndarray, length: int) -> np.ndarray:
    if x.shape[0] >= length:
        return x[:length]
    pad = np.zeros((length - x.shape[0], x.shape[1]), dtype=x.dtype)
    return np.concatenate([x, pad], axis=0)


# -- binary container -----------------------------------------------------------


def write_container(path: str | Path, samples: list[Sample]) -> None:
    parts = [MAGIC, struct.pack("<II", VERSION, len(samples))]
    for s in samples:
        raw_id = s.id.encode("utf-8")
        parts.append(struct.pack("<H", len(raw_id)))
        parts.append(raw_id)
        parts.append(struct.pack("<f", s.label))
        for m in MODALITIES:
            x = np.ascontiguousarray(s.features[m], dtype="<f4")
            parts.append(struct.pack("<II", *x.shape))
            parts.append(x.tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_container(path: str | Path) -> list[Sample]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    if len(raw) < 12:
        raise CorruptError(f"{path}: truncated header")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported container version {version}")
    off = 12
    samples = []

    def need(n):
        if off + n > len(raw):
            raise CorruptError(
                f"{path}: header declares {count} records but data ends after {len(samples)}"
            )

    for _ in range(count):
        need(2)
        (id_len,) = struct.unpack_from("<H", raw, off)
        off += 2
        need(id_len + 4)
        sid = raw[off : off + id_len].decode("utf-8")
        off += id_len
        (label,) = struct.unpack_from("<f", raw, off)
        off += 4
        feats = {}
        for m in MODALITIES:
            need(8)
            n, d = struct.unpack_from("<II", raw, off)
            off += 8
            need(4 * n * d)
            feats[m] = np.frombuffer(raw, dtype="<f4", count=n * d, offset=off).reshape(n, d).astype(np.float32)
            off += 4 * n * d
        samples.append(_RawSample(sid, feats, float(np.float32(label))))
    if off != len(raw):
        raise CorruptError(f"{path}: {len(raw) - off} trailing bytes after {count} records")
    return samples


@dataclass
class _RawSample:
    # label and lengths not yet validated against meta.json
    id: str
    features: dict[str, np.ndarray]
    label: float


def read_jsonl(path: str | Path) -> list[_RawSample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            missing = [m for m in MODALITIES if m not in rec]
            if missing:
                raise SchemaError(f"{path}:{lineno}: missing modality {', '.join(missing)}")
            feats = {m: np.asarray(rec[m], dtype=np.float32).reshape(len(rec[m]), -1) for m in MODALITIES}
            out.append(_RawSample(str(rec["id"]), feats, float(np.float32(rec["label"]))))
    return out


# -- dataset directory ------------------------------------------------------------


def save_dataset(dataset: Dataset, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "format": MAGIC.decode(),
        "version": VERSION,
        "modalities": {m: {"length": dataset.dims[m][0], "dim": dataset.dims[m][1]} for m in MODALITIES},
        "splits": {name: f"{name}.dlf" for name in dataset.splits},
        "label_range": list(LABEL_RANGE),
    }
    for name, samples in dataset.splits.items():
        write_container(directory / meta["splits"][name], samples)
    (directory / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def load_dataset(directory: str | Path) -> Dataset:
    """Read ``meta.json`` and every split it names.

    Sequences are zero-padded at the end or truncated to the declared
    lengths; labels outside the range are clamped and counted.
    """
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text())
    mods = meta.get("modalities", {})
    missing = [m for m in MODALITIES if m not in mods]
    if missing:
        raise SchemaError(f"meta.json: missing modality {', '.join(missing)}")
    dims = {m: (int(mods[m]["length"]), int(mods[m]["dim"])) for m in MODALITIES}
    lo, hi = meta.get("label_range", LABEL_RANGE)
    splits: dict[str, list[Sample]] = {}
    clamped = 0
    for name, fname in meta["splits"].items():
        path = directory / fname
        raw = read_jsonl(path) if path.suffix == ".jsonl" else read_container(path)
        samples = []
        for r in raw:
            feats = {}
            for m in MODALITIES:
                x = r.features[m]
                if x.shape[1] != dims[m][1]:
                    raise SchemaError(f"{fname}/{r.id}: modality {m} dim {x.shape[1]} != {dims[m][1]}")
                feats[m] = _fit_length(x, dims[m][0])
            label = r.label
            if not lo <= label <= hi:
                clamped += 1
                label = float(np.clip(label, lo, hi))
            samples.append(Sample(r.id, feats, label))
        splits[name] = samples
    if clamped:
        logger.warning("clamped %d labels into [%g, %g]", clamped, lo, hi)
    return Dataset(splits, dims, clamped)


# -- synthetic data -------------------------------------------------------------


@dataclass
class SyntheticSpec:
    n_train: int = 64
    n_valid: int = 16
    n_test: int = 16
    lengths: dict[str, int] = field(default_factory=lambda: {"L": 12, "V": 10, "A": 10})
    feature_dims: dict[str, int] = field(default_factory=lambda: {"L": 16, "V": 8, "A": 8})
    seed: int = 0
    language_snr: float = 4.0
    other_snr: float = 0.5


def gen_synthetic(spec: SyntheticSpec) -> Dataset:
    """Draw a dataset whose modalities carry the label with different strength.

    Each modality has a fixed random unit direction; every time step of a
    sample is ``snr * (label / 3) * direction + N(0, I)``. A pure function of
    ``spec``.
    """
    sizes = {"train": spec.n_train, "valid": spec.n_valid, "test": spec.n_test}
    if any(n < 0 for n in sizes.values()):
        raise ValueError("split sizes must be non-negative")
    for m in MODALITIES:
        if spec.lengths[m] < 1 or spec.feature_dims[m] < 1:
            raise ValueError(f"modality {m} must have positive length and dim")
    if spec.language_snr < 0 or spec.other_snr < 0:
        raise ValueError("snr values must be non-negative")
    rng = np.random.default_rng(spec.seed)
    directions = {}
    for m in MODALITIES:
        u = rng.standard_normal(spec.feature_dims[m])
        directions[m] = u / np.linalg.norm(u)
    snr = {"L": spec.language_snr, "V": spec.other_snr, "A": spec.other_snr}
    splits = {}
    for name, n in sizes.items():
        labels = rng.uniform(LABEL_RANGE[0], LABEL_RANGE[1], size=n).astype(np.float32)
        samples = []
        for i in range(n):
            y = float(labels[i])
            feats = {}
            for m in MODALITIES:
                noise = rng.standard_normal((spec.lengths[m], spec.feature_dims[m]))
                feats[m] = (snr[m] * (y / 3.0) * directions[m] + noise).astype(np.float32)
            samples.append(Sample(f"{name}-{i:05d}", feats, y))
        splits[name] = samples
    dims = {m: (spec.lengths[m], spec.feature_dims[m]) for m in MODALITIES}
    return Dataset(splits, dims)


# -- batching -------------------------------------------------------------------


def stack(samples: list[Sample]) -> Batch:
    return Batch(
        ids=[s.id for s in samples],
        features={m: np.stack([s.features[m] for s in samples]) for m in MODALITIES},
        labels=np.array([s.label for s in samples], dtype=np.float64),
    )


def batches(samples: list[Sample], batch_size: int, seed: int = 0, shuffle: bool = True) -> Iterator[Batch]:
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if not samples:
        raise ValueError("cannot batch an empty split")
    order = np.arange(len(samples))
    if shuffle:
        order = np.random.default_rng(seed).permutation(len(samples))
    for start in range(0, len(samples), batch_size):
        yield stack([samples[i] for i in order[start : start + batch_size]])
