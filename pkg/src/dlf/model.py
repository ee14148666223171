"""The full DLF network and its training objective."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .config import RunConfig
from .data import MODALITIES, Batch
from .encoders import DisentangleEncoders
from .fusion import LossReport, PredictionHeads, Predictions, SharedPathway, fuse, msa_loss, total_objective
from .lfa import LanguageFocusedAttractor, LfaOutput
from .losses import LossWeights, decouple_loss, ortho_loss, recon_loss, sample_triplets, specific_loss, triplet_loss
from .nn import Module, mean_pool


@dataclass
class ForwardOutput:
    projected: dict[str, Tensor]
    shared: dict[str, Tensor]
    specific: dict[str, Tensor]
    reconstructed: dict[str, Tensor]
    re_specific: dict[str, Tensor]
    lfa: LfaOutput
    hsh: Tensor
    fused: Tensor
    preds: Predictions


class DLFModel(Module):
    def __init__(self, config: RunConfig, feature_dims: dict[str, int], seed: int | None = None):
        self.config = config
        self.modalities = config.modalities
        seed = config.seed if seed is None else seed
        rng = np.random.default_rng([seed, 0])
        c = config
        self.encoders = DisentangleEncoders(
            c.modalities, feature_dims, c.d_model, c.encoder_depth, c.heads, c.ffn_expansion,
            c.dropout, c.kernel_size, rng, shared=c.use_fdm,
        )
        self.lfa = LanguageFocusedAttractor(
            c.modalities, c.d_model, c.lfa_depth, c.heads, c.ffn_expansion, c.dropout, rng,
            pos_embed_sources=c.pos_embed_sources, separate_queries=not c.use_lfa,
        )
        self.shared_path = SharedPathway(c.d_model, c.heads, c.ffn_expansion, c.dropout, rng)
        self.heads = PredictionHeads(c.modalities, c.d_model, c.dropout, rng)
        self.assign_names()
        self.set_rng(np.random.default_rng([seed, 1]))
        self.weights = LossWeights(c.lambda_r, c.lambda_s, c.lambda_m, c.lambda_o, c.mu)

    # -- forward ---------------------------------------------------------------

    def forward(self, batch: Batch) -> ForwardOutput:
        enc = self.encoders
        x = {m: enc.project(batch.features[m], m) for m in self.modalities}
        sp = {m: enc.encode_specific(x[m], m) for m in self.modalities}
        if self.config.use_fdm:
            sh = {m: enc.encode_shared(x[m]) for m in self.modalities}
            rec = {m: enc.reconstruct(sh[m], sp[m], m) for m in self.modalities}
            sp_re = {m: enc.reencode_specific(rec[m], m) for m in self.modalities}
        else:
            # no disentanglement: the specific features feed both pathways
            sh, rec, sp_re = sp, {}, {}
        lfa_out = self.lfa(sp)
        hsh = self.shared_path(sh)
        fused = fuse(lfa_out.high, hsh)
        preds = self.heads(fused, hsh, lfa_out.high)
        return ForwardOutput(x, sh, sp, rec, sp_re, lfa_out, hsh, fused, preds)

    def __call__(self, batch: Batch) -> ForwardOutput:
        return self.forward(batch)

    def objective(self, batch: Batch, triplet_seed: int = 0) -> tuple[Tensor, LossReport]:
        """L_DLF for one batch together with every component value."""
        out = self.forward(batch)
        c = self.config
        w = self.weights
        if c.use_fdm:
            l_r = recon_loss(out.projected, out.reconstructed)
            l_s = specific_loss(out.specific, out.re_specific)
            pooled = {m: mean_pool(out.shared[m]) for m in self.modalities}
            l_m = triplet_loss(sample_triplets(pooled, batch.labels, triplet_seed), w.mu, c.triplet_metric)
            l_o = ortho_loss(out.shared, out.specific, c.ortho_granularity)
            l_d = decouple_loss(l_r, l_s, l_m, l_o, w)
        else:
            l_r = l_s = l_m = l_o = l_d = Tensor(0.0)
        beta_sp = c.beta_specific()
        l_msa, terms = msa_loss(out.preds, batch.labels, c.beta_f, c.beta_shared(), beta_sp)
        total = total_objective(l_d, l_msa)
        report = LossReport(
            L_r=l_r.item(), L_s=l_s.item(), L_m=l_m.item(), L_o=l_o.item(), L_d=l_d.item(),
            L_f=terms["f"].item(), L_Sh=terms["Sh"].item(),
            L_Sp={m: terms[f"Sp_{m}"].item() for m in self.modalities},
            L_MSA=l_msa.item(), L_DLF=total.item(),
            beta={"f": c.beta_f, "Sh": c.beta_shared(), "Sp": {m: beta_sp[m] for m in self.modalities}},
        )
        return total, report

    def predict(self, batch: Batch) -> np.ndarray:
        """Final-head predictions in evaluation mode without a graph."""
        was = self.training
        self.eval()
        try:
            with ag.no_grad():
                return self.forward(batch).preds.final.data.astype(np.float64)
        finally:
            self.train(was)

    def fused_representation(self, batch: Batch) -> np.ndarray:
        was = self.training
        self.eval()
        try:
            with ag.no_grad():
                return self.forward(batch).fused.data.astype(np.float64)
        finally:
            self.train(was)

    def attention_maps(self) -> list[np.ndarray]:
        from .nn import MultiHeadAttention

        return [m.last_attention for m in self.modules()
                if isinstance(m, MultiHeadAttention) and m.last_attention is not None]

    # -- state -------------------------------------------------------------------

    def state(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self.parameters()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        params = {p.name: p for p in self.parameters()}
        if set(params) != set(state):
            missing = sorted(set(params) - set(state))
            extra = sorted(set(state) - set(params))
            raise KeyError(f"state mismatch; missing {missing[:5]}, unexpected {extra[:5]}")
        for name, p in params.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.shape}")
            p.data = arr.astype(p.data.dtype)
            p.grad = np.zeros_like(p.data)


def feature_dims_of(dims: dict[str, tuple[int, int]]) -> dict[str, int]:
    return {m: dims[m][1] for m in MODALITIES}
