"""Acceptance gate: one test per headline criterion.

Each test records a PASS/FAIL line; pytest prints them in its terminal
summary and ``python3 tests/test_acceptance.py`` prints them directly.
"""

import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from dlf import autograd as ag
from dlf.ablation import COLUMNS, VARIANTS, format_markdown, run_ablation, variant_config
from dlf.autograd import Tensor
from dlf.cli import main
from dlf.config import RunConfig
from dlf.data import Batch, Sample, SyntheticSpec, gen_synthetic, stack
from dlf.fusion import Predictions, msa_loss
from dlf.gradcheck import grad_check, tiny_problem
from dlf.lfa import ablate_lfa_separate_queries, lfa_forward
from dlf.losses import LossWeights, TripletBatch, decouple_loss, ortho_loss, recon_loss, specific_loss, triplet_loss
from dlf.model import DLFModel, feature_dims_of
from dlf.train import evaluate, train

sys.path.insert(0, str(Path(__file__).parent))
import oracles  # noqa: E402

RESULTS: list[str] = []


def record(name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def test_gradient_fidelity():
    t0 = time.perf_counter()
    with ag.precision(64):
        model, batch = tiny_problem(0)
        report = grad_check(model, batch, epsilon=1e-5, tolerance=1e-4)
    elapsed = time.perf_counter() - t0
    checked = sum(p.checked for p in report.params)
    record("gradient fidelity", report.passed and report.max_rel_error < 1e-4 and elapsed < 60,
           f"max rel err {report.max_rel_error:.2e} (< 1e-4) over {len(report.params)} parameters, "
           f"{checked} entries, {report.skipped} kink-skipped, {elapsed:.1f}s (< 60s)")


def test_attention_invariants():
    cfg = RunConfig()
    data = gen_synthetic(SyntheticSpec(n_train=1, n_valid=0, n_test=0))
    model = DLFModel(cfg, feature_dims_of(data.dims))
    rng = np.random.default_rng(0)
    worst, n_maps = 0.0, 0
    for i in range(100):
        scale = 10.0 ** rng.uniform(-1, 1.5)
        feats = {m: rng.standard_normal((2, n, d)) * scale for m, (n, d) in data.dims.items()}
        model.train(i % 2 == 0)  # exercise both modes
        model(Batch(["a", "b"], feats, np.zeros(2)))
        maps = model.attention_maps()
        n_maps = len(maps)
        worst = max(worst, max(float(np.abs(a.astype(np.float64).sum(axis=-1) - 1).max()) for a in maps))
    # shared + three specific encoders, three attractor branches, the shared-pathway block
    expected = 4 * cfg.encoder_depth + 3 * cfg.lfa_depth + 1
    record("attention invariants", worst <= 1e-6 and n_maps == expected,
           f"worst |row sum - 1| = {worst:.1e} (<= 1e-6) across {n_maps}/{expected} attention modules x 100 inputs")


def test_loss_identities():
    with ag.precision(64):
        rng = np.random.default_rng(0)
        x = {m: Tensor(rng.standard_normal((2, 3, 4))) for m in "LVA"}
        checks = {
            "recon(x, x) = 0": recon_loss(x, x).item() == 0.0,
            "specific(x, x) = 0": specific_loss(x, x).item() == 0.0,
        }
        s = Tensor(rng.standard_normal((5, 4)))
        checks["triplet(S=P=N) = mu"] = abs(triplet_loss(TripletBatch(s, s, s, 5), 0.2).item() - 0.2) < 1e-12
        e1, e2 = Tensor([[[1.0, 0.0]]]), Tensor([[[0.0, 1.0]]])
        checks["ortho orthogonal = 0"] = ortho_loss({"L": e1}, {"L": e2}).item() == 0.0
        checks["ortho parallel = 1"] = abs(ortho_loss({"L": e1}, {"L": e1}).item() - 1.0) < 1e-12

        w = LossWeights(0.7, 1.3, 0.1, 0.3)
        w2 = LossWeights(1.4, 2.6, 0.2, 0.6)
        comps = [Tensor(v) for v in (2.0, 4.0, 0.2, 0.1)]
        checks["L_d(2w) = 2 L_d(w)"] = abs(decouple_loss(*comps, w2).item() - 2 * decouple_loss(*comps, w).item()) < 1e-6

        preds = Predictions(Tensor(rng.standard_normal(4)), Tensor(rng.standard_normal(4)),
                            {m: Tensor(rng.standard_normal(4)) for m in "LVA"})
        y = rng.uniform(-3, 3, 4)
        one, _ = msa_loss(preds, y, 1.0, 0.3, {"L": 0.3, "V": 0.2, "A": 0.1})
        two, _ = msa_loss(preds, y, 2.0, 0.6, {"L": 0.6, "V": 0.4, "A": 0.2})
        checks["L_MSA(2b) = 2 L_MSA(b)"] = abs(two.item() - 2 * one.item()) < 1e-6

        # same identities through the assembled model objective
        data = gen_synthetic(SyntheticSpec(n_train=4, n_valid=0, n_test=0, seed=3))
        batch = stack(data.splits["train"])
        base = dict(lambda_r=0.5, lambda_s=0.5, lambda_m=0.2, lambda_o=0.3, beta_f=1.0, beta_sh=0.3, beta_sp=0.3)
        reps = []
        for k in (1, 2):
            cfg = RunConfig(d_model=8, heads=2, dropout=0.0, **{n: k * v for n, v in base.items()})
            reps.append(DLFModel(cfg, feature_dims_of(data.dims)).objective(batch)[1])
        checks["model L_d linear"] = abs(reps[1].L_d - 2 * reps[0].L_d) < 1e-6
        checks["model L_MSA linear"] = abs(reps[1].L_MSA - 2 * reps[0].L_MSA) < 1e-6
    failed = [k for k, ok in checks.items() if not ok]
    record("loss identities", not failed,
           f"{len(checks) - len(failed)}/{len(checks)} identities hold" + (f"; failed: {failed}" if failed else ""))


def test_shape_contract():
    cfg = RunConfig()
    data = gen_synthetic(SyntheticSpec(n_train=2, n_valid=0, n_test=0))
    model = DLFModel(cfg, feature_dims_of(data.dims))
    out = model(stack(data.splits["train"]))
    lfa = {m: out.lfa.streams[m].shape for m in "LVA"}
    sep = {m: t.shape for m, t in ablate_lfa_separate_queries(model.lfa, out.specific).streams.items()}
    direct = {m: t.shape for m, t in lfa_forward(model.lfa, out.specific).streams.items()}
    want_lfa = {m: (2, 12, cfg.d_model) for m in "LVA"}
    want_sep = {"L": (2, 12, cfg.d_model), "V": (2, 10, cfg.d_model), "A": (2, 10, cfg.d_model)}
    record("shape contract", lfa == direct == want_lfa and sep == want_sep,
           f"lfa_forward lengths {[s[1] for s in direct.values()]}, "
           f"separate-query lengths {[s[1] for s in sep.values()]}")


class _Reached(Exception):
    pass


def test_trainability():
    data = gen_synthetic(SyntheticSpec(n_train=32, n_valid=16, n_test=16, seed=0,
                                       language_snr=4.0, other_snr=0.5))
    cfg = RunConfig(max_epochs=300, patience=300, track_train=True)
    best = {"mae": math.inf, "epoch": -1}

    def watch(rec):
        if rec["train"]["mae"] < best["mae"]:
            best.update(mae=rec["train"]["mae"], epoch=rec["epoch"])
        if best["mae"] < 0.1:
            raise _Reached

    t0 = time.perf_counter()
    try:
        train(data, cfg, on_epoch=watch)
    except _Reached:
        pass
    elapsed = time.perf_counter() - t0
    record("trainability", best["mae"] < 0.1 and elapsed < 300,
           f"train MAE {best['mae']:.4f} (< 0.1) at epoch {best['epoch'] + 1} of <= 300, {elapsed:.1f}s (< 300s)")


def test_dominance():
    data = gen_synthetic(SyntheticSpec(n_train=512, n_valid=64, n_test=128, seed=0,
                                       language_snr=4.0, other_snr=0.5))
    base = RunConfig(max_epochs=30, patience=10, batch_size=32)
    rows = {r.key: r.report.mae for r in run_ablation(data, base, ["only_L", "only_V", "only_A"])}
    record("dominance", rows["only_L"] < rows["only_V"] and rows["only_L"] < rows["only_A"],
           f"test MAE only L {rows['only_L']:.3f} < only V {rows['only_V']:.3f}, only A {rows['only_A']:.3f}")


class _FixedModel:
    """Stands in for a trained model: returns the fixture predictions by id."""

    def __init__(self, preds):
        self.preds = preds

    def predict(self, batch):
        return np.array([self.preds[int(i)] for i in batch.ids])


def test_metric_oracle():
    feats = {m: np.zeros((1, 1), np.float32) for m in "LVA"}
    samples = [Sample(str(i), feats, y) for i, y in enumerate(oracles.METRIC_LABELS)]
    r = evaluate(_FixedModel(oracles.METRIC_PREDS), samples)
    ref = oracles.metrics(oracles.METRIC_PREDS, oracles.METRIC_LABELS)
    hand = {"acc7": 6 / 10, "acc5": 8 / 10, "acc2": 7 / 9, "f1": 5 / 6, "mae": 0.65}
    ok = (r.acc7 == ref["acc7"] == hand["acc7"] and r.acc5 == ref["acc5"] == hand["acc5"]
          and r.acc2 == ref["acc2"] == hand["acc2"] and r.mae == ref["mae"]
          and abs(r.mae - hand["mae"]) < 1e-12
          and abs(r.f1 - ref["f1"]) <= 1e-9 and abs(r.f1 - hand["f1"]) <= 1e-9
          and abs(r.corr - ref["corr"]) <= 1e-9)
    record("metric oracle", ok,
           f"Acc-7 {r.acc7:.3f} Acc-5 {r.acc5:.3f} Acc-2 {r.acc2:.4f} F1 {r.f1:.4f} "
           f"Corr {r.corr:.6f} (oracle {ref['corr']:.6f}) MAE {r.mae:.3f}")


def test_ablation_completeness(tmp_path):
    t0 = time.perf_counter()
    code = main(["ablate", "--out", str(tmp_path)])
    elapsed = time.perf_counter() - t0
    table = (tmp_path / "ablation.md").read_text().splitlines()
    header = [c.strip() for c in table[0].strip("|").split("|")][1:]
    body = [line for line in table[2:] if not line.startswith("| *")]
    csv_rows = (tmp_path / "ablation.csv").read_text().splitlines()[1:]
    ok = code == 0 and len(body) == 14 == len(VARIANTS) == len(csv_rows) and tuple(header) == COLUMNS
    record("ablation completeness", ok and elapsed < 1800,
           f"{len(body)} rows (13 variants + full), columns {header}, {elapsed:.0f}s (< 1800s)")


@pytest.fixture(scope="module")
def twin_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    args = ["--set", "max_epochs=15"]
    for name in ("a", "b"):
        assert main(["train", "--out", str(root / name), *args]) == 0
    return root / "a", root / "b"


def test_determinism(twin_runs):
    a, b = twin_runs
    same = {n: (a / n).read_bytes() == (b / n).read_bytes() for n in ("history.jsonl", "metrics.json")}
    epochs = len((a / "history.jsonl").read_text().splitlines())
    record("determinism", all(same.values()),
           f"history.jsonl identical={same['history.jsonl']}, metrics.json identical={same['metrics.json']} "
           f"({epochs} epochs each)")


def test_persistence_round_trip(twin_runs, tmp_path):
    run, _ = twin_runs
    assert main(["eval", "--run", str(run), "--out", str(tmp_path)]) == 0
    trained = json.loads((run / "metrics.json").read_text())["test"]
    loaded = json.loads((tmp_path / "metrics.json").read_text())["test"]
    record("persistence round trip", trained == loaded,
           f"reloaded checkpoint test metrics {'identical' if trained == loaded else 'DIFFER'} "
           f"(MAE {loaded['mae']!r})")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
