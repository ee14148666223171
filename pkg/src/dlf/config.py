"""Flat, fully defaulted run configuration."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .data import MODALITIES, SyntheticSpec


class ConfigError(ValueError):
    pass


def _f(default, help: str):
    return field(default=default, metadata={"help": help})


@dataclass
class RunConfig:
    data_dir: str | None = _f(None, "dataset directory (meta.json + split files); None = synthetic")
    # synthetic data (used when no dataset directory is given)
    synth_n_train: int = _f(64, "synthetic train split size")
    synth_n_valid: int = _f(16, "synthetic validation split size")
    synth_n_test: int = _f(16, "synthetic test split size")
    synth_seed: int = _f(0, "synthetic generator seed")
    language_snr: float = _f(4.0, "label signal strength in language features")
    other_snr: float = _f(0.5, "label signal strength in vision/audio features")
    len_l: int = _f(12, "language sequence length N_L")
    len_v: int = _f(10, "vision sequence length N_V")
    len_a: int = _f(10, "audio sequence length N_A")
    dim_l: int = _f(16, "language feature dim d_L")
    dim_v: int = _f(8, "vision feature dim d_V")
    dim_a: int = _f(8, "audio feature dim d_A")

    # model
    d_model: int = _f(16, "common model dimension d")
    encoder_depth: int = _f(1, "transformer blocks in shared and specific encoders")
    lfa_depth: int = _f(2, "multimodal transformer layers per attractor branch")
    heads: int = _f(4, "attention heads (must divide d_model)")
    ffn_expansion: int = _f(2, "feed-forward hidden width multiplier")
    dropout: float = _f(0.1, "dropout rate for every dropout site")
    kernel_size: int = _f(1, "temporal kernel of the projection and decoder convolutions")
    pos_embed_sources: bool = _f(True, "add positional embedding to attractor key/value sources")
    triplet_metric: str = _f("distance", "triplet d(.,.): 'distance' (1-cos) or 'similarity' (cos)")
    ortho_granularity: str = _f("pooled", "orthogonality on 'pooled' vectors or per 'step'")

    # loss weights
    lambda_r: float = _f(1.0, "weight of the reconstruction loss")
    lambda_s: float = _f(1.0, "weight of the specific re-encoding loss")
    lambda_m: float = _f(0.1, "weight of the triplet loss")
    lambda_o: float = _f(0.3, "weight of the soft orthogonality loss")
    mu: float = _f(0.2, "triplet margin")
    beta_f: float = _f(1.0, "weight of the final prediction loss")
    beta_sh: float = _f(0.3, "weight of the shared prediction loss")
    beta_sp: float = _f(0.3, "weight of each specific prediction loss")
    beta_sp_l: float | None = _f(None, "override of beta_sp for the language head")
    beta_sp_v: float | None = _f(None, "override of beta_sp for the vision head")
    beta_sp_a: float | None = _f(None, "override of beta_sp for the audio head")

    # optimisation
    lr: float = _f(1e-4, "Adam learning rate")
    adam_beta1: float = _f(0.9, "Adam first-moment decay")
    adam_beta2: float = _f(0.999, "Adam second-moment decay")
    adam_eps: float = _f(1e-8, "Adam epsilon guard")
    batch_size: int = _f(16, "training batch size")
    max_epochs: int = _f(500, "upper bound on training epochs")
    patience: int = _f(10, "early-stopping patience in epochs (validation MAE)")
    clip_norm: float = _f(1.0, "global gradient-norm clip (0 disables)")
    track_train: bool = _f(False, "also evaluate the train split after every epoch")
    seed: int = _f(0, "seed for initialisation, shuffling, dropout and triplets")

    # ablation switches
    modalities: str = _f("LVA", "modality subset, any of L, V, A in that order")
    use_fdm: bool = _f(True, "feature disentanglement (off: specific encoder only, L_d = 0)")
    use_lfa: bool = _f(True, "language-focused attractor (off: separate per-modality queries)")
    use_hp: bool = _f(True, "hierarchical predictions (off: beta_sh = beta_sp = 0)")

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        mods = self.modalities
        if not mods or any(m not in MODALITIES for m in mods) or len(set(mods)) != len(mods):
            raise ConfigError(f"modalities must be a non-empty subset of LVA, got {mods!r}")
        self.modalities = "".join(m for m in MODALITIES if m in mods)
        if self.d_model < 1 or self.heads < 1 or self.d_model % self.heads:
            raise ConfigError(f"d_model={self.d_model} must be divisible by heads={self.heads}")
        if self.encoder_depth < 0:
            raise ConfigError("encoder_depth must be >= 0")
        if self.lfa_depth < 1:
            raise ConfigError("lfa_depth must be >= 1")
        if self.kernel_size < 1 or self.ffn_expansion < 1:
            raise ConfigError("kernel_size and ffn_expansion must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.triplet_metric not in ("distance", "similarity"):
            raise ConfigError("triplet_metric must be 'distance' or 'similarity'")
        if self.ortho_granularity not in ("pooled", "step"):
            raise ConfigError("ortho_granularity must be 'pooled' or 'step'")
        weights = [self.lambda_r, self.lambda_s, self.lambda_m, self.lambda_o, self.mu,
                   self.beta_f, self.beta_sh, self.beta_sp]
        weights += [w for w in (self.beta_sp_l, self.beta_sp_v, self.beta_sp_a) if w is not None]
        if any(not (w >= 0.0 and w < float("inf")) for w in weights):
            raise ConfigError("loss weights and margin must be finite and >= 0")
        if self.lr <= 0 or self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("lr, batch_size, max_epochs and patience must be positive")
        if self.clip_norm < 0:
            raise ConfigError("clip_norm must be >= 0")

    # -- derived views ---------------------------------------------------------

    def beta_specific(self) -> dict[str, float]:
        if not self.use_hp:
            return {m: 0.0 for m in MODALITIES}
        over = {"L": self.beta_sp_l, "V": self.beta_sp_v, "A": self.beta_sp_a}
        return {m: self.beta_sp if over[m] is None else over[m] for m in MODALITIES}

    def beta_shared(self) -> float:
        return self.beta_sh if self.use_hp else 0.0

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(
            n_train=self.synth_n_train,
            n_valid=self.synth_n_valid,
            n_test=self.synth_n_test,
            lengths={"L": self.len_l, "V": self.len_v, "A": self.len_a},
            feature_dims={"L": self.dim_l, "V": self.dim_v, "A": self.dim_a},
            seed=self.synth_seed,
            language_snr=self.language_snr,
            other_snr=self.other_snr,
        )

    # -- (de)serialisation -------------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**raw)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def with_overrides(self, overrides: dict) -> "RunConfig":
        merged = self.to_dict()
        merged.update(overrides)
        return RunConfig.from_dict(merged)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def parse_override(text: str) -> tuple[str, object]:
    """Parse ``key=value`` with the value coerced to the key's type."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, value = text.split("=", 1)
    key = key.strip()
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    default = _FIELDS[key].default
    value = value.strip()
    if value.lower() in ("none", "null") and default is None:
        return key, None
    kind = type(default) if default is not None else (str if key == "data_dir" else float)
    try:
        if kind is bool:
            if value.lower() in ("1", "true", "yes", "on"):
                return key, True
            if value.lower() in ("0", "false", "no", "off"):
                return key, False
            raise ValueError(value)
        return key, kind(value)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None


def describe_keys() -> str:
    """One line per config key: name, default and meaning (for --help)."""
    lines = ["config keys (set with --set key=value or a JSON --config file):"]
    for f in dataclasses.fields(RunConfig):
        lines.append(f"  {f.name} (default {f.default!r}): {f.metadata['help']}")
    return "\n".join(lines)


def tiny_config(**overrides) -> RunConfig:
    """Small model used for gradient checks and fast tests."""
    base = dict(d_model=8, encoder_depth=1, lfa_depth=1, heads=2, dropout=0.0, batch_size=2)
    base.update(overrides)
    return RunConfig(**base)
