"""Command-line entry point: ``dlf <command> [options]``.

Exit codes: 0 ok, 2 usage/config, 3 I/O or format, 4 divergence,
5 gradient check failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

from . import autograd as ag
from .ablation import VARIANTS, UnknownVariant, format_markdown, run_ablation, write_csv
from .config import ConfigError, RunConfig, describe_keys, parse_override
from .data import DataError, Dataset, SyntheticSpec, gen_synthetic, load_dataset, save_dataset
from .gradcheck import grad_check, tiny_problem
from .metrics import CLASS_NAMES
from .model import DLFModel
from .train import (
    CheckpointError,
    DivergenceError,
    append_history,
    confusion,
    evaluate,
    export_representations,
    load_model,
    save_checkpoint,
    train,
)

logger = logging.getLogger("dlf")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DIVERGED, EXIT_GRADCHECK = 0, 2, 3, 4, 5
TABLE_COLUMNS = ("Acc-7", "Acc-5", "Acc-2", "F1", "Corr", "MAE")


class UsageError(Exception):
    pass


def _triple(text: str, kind=int) -> tuple:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated values, got {text!r}")
    try:
        return tuple(kind(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad value in {text!r}") from None


def resolve_config(args) -> RunConfig:
    config = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = dict(parse_override(s) for s in getattr(args, "set", None) or [])
    if getattr(args, "data", None):
        overrides["data_dir"] = str(args.data)
    return config.with_overrides(overrides) if overrides else config


def load_data(config: RunConfig, data: str | None = None) -> Dataset:
    path = data or config.data_dir
    return load_dataset(path) if path else gen_synthetic(config.synthetic_spec())


def format_table_row(report) -> str:
    vals = [100 * report.acc7, 100 * report.acc5, 100 * report.acc2, 100 * report.f1]
    cells = [f"{v:.2f}" for v in vals] + [f"{report.corr:.3f}", f"{report.mae:.3f}"]
    head = " | ".join(f"{c:>6}" for c in TABLE_COLUMNS)
    body = " | ".join(f"{c:>6}" for c in cells)
    return f"{head}\n{body}"


# -- commands -------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    n_train, n_valid, n_test = args.n
    if n_train < 1 or n_valid < 1 or n_test < 1:
        raise UsageError("--n needs at least one sample in every split")
    spec = SyntheticSpec(
        n_train=n_train, n_valid=n_valid, n_test=n_test,
        lengths=dict(zip("LVA", args.lengths)), feature_dims=dict(zip("LVA", args.dims)),
        seed=args.seed, language_snr=args.language_snr, other_snr=args.other_snr,
    )
    try:
        dataset = gen_synthetic(spec)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    save_dataset(dataset, args.out)
    print(f"wrote {args.out}: " + ", ".join(f"{k} {len(v)}" for k, v in dataset.splits.items()))
    print("dims: " + ", ".join(f"{m} {n}x{d}" for m, (n, d) in dataset.dims.items()))
    return EXIT_OK


def cmd_train(args) -> int:
    config = resolve_config(args)
    dataset = load_data(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("config.json", "history.jsonl", "model.dlfc", "metrics.json"):
        (out / name).unlink(missing_ok=True)
    config.save(out / "config.json")
    history_path = out / "history.jsonl"
    result = train(dataset, config, on_epoch=lambda rec: append_history(history_path, rec))
    save_checkpoint(result.model, out / "model.dlfc")
    metrics = {
        "best_epoch": result.best_epoch,
        "best_valid_mae": result.best_valid_mae,
        "epochs": len(result.history),
        "valid": evaluate(result.model, dataset.splits["valid"]).to_dict(),
    }
    test = dataset.splits.get("test")
    if test:
        report = evaluate(result.model, test)
        metrics["test"] = report.to_dict()
        print(format_table_row(report))
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _load_run(args) -> tuple[RunConfig, Dataset, DLFModel]:
    run = Path(args.run)
    config = RunConfig.from_file(run / "config.json")
    dataset = load_data(config, args.data)
    model = load_model(config, dataset, run / "model.dlfc")
    if args.split not in dataset.splits or not dataset.splits[args.split]:
        raise UsageError(f"split {args.split!r} is missing or empty")
    return config, dataset, model


def cmd_eval(args) -> int:
    _, dataset, model = _load_run(args)
    samples = dataset.splits[args.split]
    report = evaluate(model, samples)
    out = Path(args.out) if args.out else Path(args.run) / "eval"
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(json.dumps({args.split: report.to_dict()}, indent=2, sort_keys=True) + "\n")
    mat, acc, _ = confusion(model, samples)
    with open(out / "confusion7.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["true\\pred", *CLASS_NAMES, "accuracy"])
        for i, name in enumerate(CLASS_NAMES):
            w.writerow([name, *mat[i].tolist(), repr(float(acc[i]))])
    print(format_table_row(report))
    return EXIT_OK


def cmd_export(args) -> int:
    _, dataset, model = _load_run(args)
    export_representations(model, dataset.splits[args.split], args.out)
    print(f"wrote {len(dataset.splits[args.split])} rows to {args.out}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    config = resolve_config(args)
    dataset = load_data(config)
    keys = args.variants or list(VARIANTS)
    t0 = time.perf_counter()
    rows = run_ablation(dataset, config, keys)
    table = format_markdown(rows)
    print(table, end="")
    print(f"total {time.perf_counter() - t0:.1f}s", file=sys.stderr)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.md").write_text(table)
        write_csv(rows, out / "ablation.csv")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.precision != 64:
        raise UsageError("gradient checking requires --precision 64")
    if not 1e-7 <= args.epsilon <= 1e-3:
        raise UsageError("--epsilon must lie in [1e-7, 1e-3]")
    with ag.precision(64):
        model, batch = tiny_problem(args.seed)
        t0 = time.perf_counter()
        report = grad_check(model, batch, epsilon=args.epsilon,
                            tolerance=args.tolerance, samples_per_param=args.samples, seed=args.seed)
    for module, err in report.by_module().items():
        print(f"{module:<12} worst relative error {err:.3e}")
    checked = sum(p.checked for p in report.params)
    print(f"overall      worst relative error {report.max_rel_error:.3e} "
          f"({checked} entries, {report.skipped} skipped at kinks, {time.perf_counter() - t0:.1f}s)")
    if not report.passed:
        for p in report.failures:
            print(f"FAIL {p.name}: {p.max_rel_error:.3e}")
        return EXIT_GRADCHECK
    print("PASS")
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    epilog = describe_keys()
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(prog="dlf", description=__doc__, epilog=epilog, formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help, description=help, epilog=epilog, formatter_class=fmt)
        p.set_defaults(func=func)
        if name != "gradcheck":
            p.add_argument("--precision", type=int, choices=(32, 64),
                           help="float width (default: DLF_PRECISION or 32)")
        return p

    def config_args(p):
        p.add_argument("--data", help="dataset directory; omit for the synthetic data in the config")
        p.add_argument("--config", help="JSON config file (e.g. a run's config.json)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")

    p = add("gen-data", cmd_gen_data, "write a synthetic dataset directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=_triple, default=(64, 16, 16), help="train,valid,test sizes")
    p.add_argument("--lengths", type=_triple, default=(12, 10, 10), help="N_L,N_V,N_A")
    p.add_argument("--dims", type=_triple, default=(16, 8, 8), help="d_L,d_V,d_A")
    p.add_argument("--language-snr", type=float, default=4.0)
    p.add_argument("--other-snr", type=float, default=0.5)

    p = add("train", cmd_train, "train a model and write a run directory")
    config_args(p)
    p.add_argument("--out", required=True, help="run directory")

    for name, func, help in (("eval", cmd_eval, "evaluate a trained run"),
                             ("export-repr", cmd_export, "export fused representations as CSV")):
        p = add(name, func, help)
        p.add_argument("--run", required=True, help="run directory written by train")
        p.add_argument("--data", help="dataset directory (default: the run's data_dir or synthetic)")
        p.add_argument("--split", default="test", choices=("train", "valid", "test"))
        p.add_argument("--out", required=(name == "export-repr"),
                       help="output CSV" if name == "export-repr" else "output directory (default RUN/eval)")

    p = add("ablate", cmd_ablate, "train every ablation variant and tabulate test metrics")
    config_args(p)
    p.add_argument("--variants", nargs="+", metavar="NAME", help="subset of: " + ", ".join(VARIANTS))
    p.add_argument("--out", help="directory for ablation.md and ablation.csv")

    p = add("gradcheck", cmd_gradcheck, "finite-difference check of the full objective (tiny config)")
    p.add_argument("--precision", type=int, default=64, help="must be 64 (the default)")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--samples", type=int, default=16, help="entries checked per parameter")
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        if args.command != "gradcheck" and args.precision is not None:
            ag.set_precision(args.precision)
        return args.func(args)
    except (UsageError, ConfigError, UnknownVariant) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, CheckpointError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
