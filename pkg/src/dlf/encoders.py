"""Modality projection, shared/specific encoders, decoders and re-encoding."""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .nn import Conv1d, Module, TransformerEncoder


class DisentangleEncoders(Module):
    """Per-modality projection to a common width ``d``, one shared encoder,
    one specific encoder and one reconstruction decoder per modality.

    ``modalities`` lists the modalities present; ``feature_dims`` maps each
    of them to its raw feature width. With ``shared=False`` only the
    projection and specific encoders exist (the no-disentanglement variant).
    """

    def __init__(
        self,
        modalities: str,
        feature_dims: dict[str, int],
        d: int,
        depth: int,
        heads: int,
        expansion: int,
        dropout: float,
        kernel_size: int,
        rng: np.random.Generator,
        shared: bool = True,
    ):
        self.modalities = modalities
        self.project_conv = {m: Conv1d(feature_dims[m], d, kernel_size, rng) for m in modalities}
        self.specific = {m: TransformerEncoder(d, depth, heads, expansion, dropout, rng) for m in modalities}
        if shared:
            # a single parameter set serves every modality
            self.shared = TransformerEncoder(d, depth, heads, expansion, dropout, rng)
            self.decoder = {m: Conv1d(2 * d, d, kernel_size, rng) for m in modalities}
        else:
            self.shared = None
            self.decoder = {}

    def project(self, x, modality: str) -> Tensor:
        return self.project_conv[modality](x if isinstance(x, Tensor) else Tensor(x))

    def encode_shared(self, x: Tensor) -> Tensor:
        if self.shared is None:
            raise RuntimeError("shared encoder is disabled in this model")
        return self.shared(x)

    def encode_specific(self, x: Tensor, modality: str) -> Tensor:
        return self.specific[modality](x)

    def reconstruct(self, sh: Tensor, sp: Tensor, modality: str) -> Tensor:
        if sh.shape != sp.shape:
            raise ag.ShapeError("reconstruct", sh.shape, sp.shape)
        return self.decoder[modality](ag.concat([sh, sp], axis=-1))

    def reencode_specific(self, x_rec: Tensor, modality: str) -> Tensor:
        return self.encode_specific(x_rec, modality)
