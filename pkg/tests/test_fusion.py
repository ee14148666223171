import numpy as np
import pytest

from dlf import autograd as ag
from dlf.autograd import Tensor
from dlf.fusion import PredictionHeads, Predictions, SharedPathway, fuse, msa_loss, total_objective


def test_shared_pathway_output_dim_and_determinism(f64, rng):
    path = SharedPathway(16, 4, 2, 0.2, rng)
    path.set_rng(np.random.default_rng(0))
    path.eval()
    sh = {m: Tensor(rng.standard_normal((2, n, 16))) for m, n in (("L", 12), ("V", 10), ("A", 10))}
    out = path(sh)
    assert out.shape == (2, 16)
    np.testing.assert_array_equal(out.data, path(sh).data)
    assert path.block.attn.last_attention.shape[-1] == 32


def test_fuse_concatenates_in_order(f64):
    hsp = {"L": Tensor([[1.0, 2.0]]), "V": Tensor([[3.0, 4.0]]), "A": Tensor([[5.0, 6.0]])}
    out = fuse(hsp, Tensor([[7.0, 8.0]]))
    np.testing.assert_array_equal(out.data, [[1, 2, 3, 4, 5, 6, 7, 8]])
    swapped = fuse({"V": hsp["V"], "L": hsp["L"], "A": hsp["A"]}, Tensor([[7.0, 8.0]]))
    assert not np.array_equal(swapped.data, out.data)


def test_heads_zero_in_zero_out_and_arity(f64, rng):
    heads = PredictionHeads("LVA", 4, 0.0, rng)
    for p in heads.parameters():
        if p.ndim == 1:
            p.data[:] = 0.0
    z = Tensor(np.zeros((3, 4)))
    preds = heads(Tensor(np.zeros((3, 16))), z, {m: z for m in "LVA"})
    assert preds.count() == 5
    for t in (preds.final, preds.shared, *preds.specific.values()):
        assert t.shape == (3,) and not t.data.any()


def test_specific_head_dot_product(f64, rng):
    heads = PredictionHeads("LVA", 3, 0.0, rng)
    heads.specific["L"].W.data = np.array([[1.0], [0.0], [0.0]])
    heads.specific["L"].b.data = np.zeros(1)
    hsp = {m: Tensor([[2.5, -1.0, 4.0]]) for m in "LVA"}
    preds = heads(Tensor(np.zeros((1, 12))), Tensor(np.zeros((1, 3))), hsp)
    assert preds.specific["L"].item() == 2.5


def _preds(final, shared=None, specific=None):
    shared = final if shared is None else shared
    specific = specific or {m: final for m in "LVA"}
    return Predictions(Tensor(final), Tensor(shared), {m: Tensor(v) for m, v in specific.items()})


def test_msa_loss_examples(f64):
    betas = {m: 0.3 for m in "LVA"}
    total, terms = msa_loss(_preds([3.0, 0.0]), [3.0, 0.0], 1.0, 0.3, betas)
    assert total.item() == 0.0
    total, terms = msa_loss(_preds([2.6, -0.4], [0.0, 0.0]), [3.0, 0.0], 1.0, 0.0, {m: 0.0 for m in "LVA"})
    assert terms["f"].item() == pytest.approx(0.4)
    assert total.item() == pytest.approx(0.4)


def test_msa_loss_weights_each_head(f64):
    p = _preds([1.0], [2.0], {"L": [3.0], "V": [4.0], "A": [5.0]})
    total, terms = msa_loss(p, [0.0], 1.0, 0.5, {"L": 0.1, "V": 0.2, "A": 0.3})
    assert total.item() == pytest.approx(1.0 + 1.0 + 0.3 + 0.8 + 1.5)
    assert set(terms) == {"f", "Sh", "Sp_L", "Sp_V", "Sp_A"}


def test_total_objective(f64):
    assert total_objective(0.0, 0.0) == 0.0
    assert total_objective(1.5, 2.5) == 4.0
    assert total_objective(Tensor(1.5), Tensor(2.5)).item() == 4.0
