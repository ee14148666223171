import numpy as np
import pytest

from dlf import autograd as ag
from dlf.config import tiny_config
from dlf.data import stack
from dlf.model import DLFModel, feature_dims_of


def build(small_dataset, **over):
    return DLFModel(tiny_config(**over), feature_dims_of(small_dataset.dims))


def test_forward_shapes(f64, small_dataset):
    model = build(small_dataset)
    batch = stack(small_dataset.splits["train"][:3])
    out = model(batch)
    assert out.fused.shape == (3, 4 * 8)
    assert out.preds.final.shape == (3,) and out.preds.count() == 5
    assert {m: t.shape for m, t in out.lfa.streams.items()} == {m: (3, 12, 8) for m in "LVA"}


def test_objective_report_is_consistent(f64, small_dataset):
    model = build(small_dataset)
    total, rep = model.objective(stack(small_dataset.splits["train"][:4]))
    c = model.config
    l_d = c.lambda_r * rep.L_r + c.lambda_s * rep.L_s + c.lambda_m * rep.L_m + c.lambda_o * rep.L_o
    assert rep.L_d == pytest.approx(l_d, rel=1e-12)
    l_msa = c.beta_f * rep.L_f + c.beta_sh * rep.L_Sh + sum(c.beta_sp * v for v in rep.L_Sp.values())
    assert rep.L_MSA == pytest.approx(l_msa, rel=1e-12)
    assert total.item() == rep.L_DLF == pytest.approx(rep.L_d + rep.L_MSA, rel=1e-12)


def test_same_seed_same_init_different_seed_differs(small_dataset):
    a, b, c = build(small_dataset), build(small_dataset), build(small_dataset, seed=1)
    sa, sb, sc = a.state(), b.state(), c.state()
    assert all(np.array_equal(sa[k], sb[k]) for k in sa)
    assert any(not np.array_equal(sa[k], sc[k]) for k in sa)


def test_single_modality_model_drops_other_branches(small_dataset):
    model = build(small_dataset, modalities="A")
    names = [n for n, _ in model.named_parameters()]
    assert not any(".L." in n or ".V." in n or n.endswith((".L", ".V")) for n in names)
    batch = stack(small_dataset.splits["train"][:2])
    assert model.predict(batch).shape == (2,)
    assert set(model(batch).preds.specific) == {"A"}


def test_without_fdm_has_no_shared_encoder_and_zero_ld(small_dataset):
    model = build(small_dataset, use_fdm=False)
    assert model.encoders.shared is None
    _, rep = model.objective(stack(small_dataset.splits["train"][:2]))
    assert rep.L_d == 0.0


def test_predict_is_eval_mode_and_restores_training(small_dataset):
    model = build(small_dataset, dropout=0.5)
    model.train()
    batch = stack(small_dataset.splits["train"][:2])
    np.testing.assert_array_equal(model.predict(batch), model.predict(batch))
    assert model.training


def test_attention_maps_cover_every_attention_module(f64, small_dataset):
    model = build(small_dataset)
    model(stack(small_dataset.splits["train"][:2]))
    # shared + 3 specific encoders (depth 1), 3 LFA branches (depth 1), shared pathway
    assert len(model.attention_maps()) == 8


def test_load_state_rejects_mismatch(small_dataset):
    model = build(small_dataset)
    state = model.state()
    state.pop(next(iter(state)))
    with pytest.raises(KeyError):
        model.load_state(state)
