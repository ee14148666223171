import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dlf import autograd as ag
from dlf.autograd import Parameter, Tensor
from dlf.config import RunConfig, parse_override
from dlf.data import Sample, batches, read_container, write_container
from dlf.gradcheck import check_function
from dlf.losses import ortho_loss, recon_loss, sentiment_bucket, specific_loss, triplet_indices
from dlf.metrics import compute_metrics, confusion_matrix
from dlf.nn import MultiHeadAttention

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
labels = st.floats(-3, 3, allow_nan=False)


def mat(shape, elements=finite):
    return arrays(np.float64, shape, elements=elements)


@given(mat((3, 5)), finite)
def test_softmax_rows_normalised_and_shift_invariant(x, c):
    with ag.precision(64):
        s = ag.softmax(Tensor(x)).data
        np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-12)
        np.testing.assert_allclose(ag.softmax(Tensor(x + c)).data, s, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(1, 6))
def test_attention_rows_normalised(seed, nq, nk):
    rng = np.random.default_rng(seed)
    with ag.precision(64):
        mha = MultiHeadAttention(4, 2, rng)
        mha(Tensor(rng.standard_normal((2, nq, 4)) * 3), Tensor(rng.standard_normal((2, nk, 4)) * 3))
    np.testing.assert_allclose(mha.last_attention.sum(axis=-1), 1.0, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_random_composition_gradients(seed):
    rng = np.random.default_rng(seed)
    with ag.precision(64):
        W = Parameter(rng.standard_normal((3, 4)), "W")
        b = Parameter(rng.standard_normal(4), "b")
        x = Tensor(rng.standard_normal((2, 5, 3)))
        y = Tensor(rng.standard_normal((2, 5, 4)))

        def loss():
            h = ag.softmax(ag.add(ag.matmul(x, W), b), axis=1)
            return ag.add(ag.mse(h, y), ag.mean(ag.cosine_similarity(h, y)))

        assert check_function(loss, [W, b], samples_per_param=4).passed


@given(mat((1, 3, 2)), mat((1, 3, 2)), st.floats(-4, 4))
def test_recon_homogeneous_and_specific_symmetric(a, b, s):
    with ag.precision(64):
        base = recon_loss({"L": Tensor(a)}, {"L": Tensor(b)}).item()
        scaled = recon_loss({"L": Tensor(s * a)}, {"L": Tensor(s * b)}).item()
        assert np.isclose(scaled, s * s * base, rtol=1e-9, atol=1e-9)
        ab = specific_loss({"V": Tensor(a)}, {"V": Tensor(b)}).item()
        ba = specific_loss({"V": Tensor(b)}, {"V": Tensor(a)}).item()
        assert ab == ba


@given(mat((2, 4, 3)), mat((2, 4, 3)))
def test_ortho_in_unit_interval(a, b):
    with ag.precision(64):
        v = ortho_loss({"A": Tensor(a)}, {"A": Tensor(b)}).item()
    assert -1e-12 <= v <= 1 + 1e-12


@given(st.lists(labels, min_size=1, max_size=12), st.integers(1, 3), st.integers(0, 99))
def test_triplets_valid(ys, k, seed):
    n = len(ys)
    b = sentiment_bucket(ys)
    idx = triplet_indices(n, k, ys, seed)
    for a, p, q in idx:
        assert b[a % n] == b[p % n] != b[q % n]
        assert a // n != p // n and a // n == q // n
    expected = 0 if k < 2 else k * sum(1 for i in range(n) if (b != b[i]).any())
    assert idx.shape[0] == expected


@given(st.lists(st.tuples(finite, labels), min_size=1, max_size=30))
def test_metric_ranges(pairs):
    preds = np.array([p for p, _ in pairs])
    ys = np.array([y for _, y in pairs])
    r = compute_metrics(preds, ys)
    for v in (r.acc7, r.acc5, r.acc2, r.f1):
        assert 0.0 <= v <= 1.0
    assert r.mae >= 0 and -1 - 1e-12 <= r.corr <= 1 + 1e-12
    mat_, _, _ = confusion_matrix(preds, ys)
    assert mat_.sum() == len(pairs)
    assert r.acc7 == np.trace(mat_) / len(pairs)


@given(st.lists(st.tuples(finite, labels), min_size=1, max_size=30), st.floats(0.01, 100))
def test_binary_metrics_scale_invariant(pairs, c):
    preds = np.array([p for p, _ in pairs])
    ys = np.array([y for _, y in pairs])
    a, b = compute_metrics(preds, ys), compute_metrics(c * preds, ys)
    assert (a.acc2, a.f1) == (b.acc2, b.f1)


sample_st = st.builds(
    lambda i, y, n, seed: Sample(
        f"id-{i}", {m: np.random.default_rng(seed + j).standard_normal((n, 2)).astype(np.float32)
                    for j, m in enumerate("LVA")}, float(np.float32(y))),
    st.integers(0, 10**6), labels, st.integers(1, 4), st.integers(0, 1000),
)


@settings(max_examples=30, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.lists(sample_st, max_size=5))
def test_container_round_trip(tmp_path, samples):
    path = tmp_path / "p.dlf"
    write_container(path, samples)
    back = read_container(path)
    assert [(s.id, s.label) for s in back] == [(s.id, s.label) for s in samples]
    for a, b in zip(samples, back):
        assert all(np.array_equal(a.features[m], b.features[m]) for m in "LVA")


@given(st.integers(1, 40), st.integers(1, 9), st.integers(0, 99))
def test_batches_partition(n, size, seed):
    samples = [Sample(str(i), {m: np.zeros((1, 1), np.float32) for m in "LVA"}, 0.0) for i in range(n)]
    got = [sid for b in batches(samples, size, seed=seed) for sid in b.ids]
    assert sorted(got, key=int) == [str(i) for i in range(n)]
    assert [len(b) for b in batches(samples, size, seed=seed)][:-1] == [size] * ((n - 1) // size)


@given(st.sampled_from(["lr", "d_model", "dropout", "use_lfa", "modalities", "patience"]))
def test_override_round_trip(key):
    value = RunConfig().to_dict()[key]
    text = str(value).lower() if isinstance(value, bool) else str(value)
    assert parse_override(f"{key}={text}") == (key, value)
