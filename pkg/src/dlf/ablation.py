"""Ablation variants over modalities, regularisers and components."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass
from pathlib import Path

from .config import RunConfig
from .data import Dataset
from .metrics import MetricReport
from .train import evaluate, train

logger = logging.getLogger(__name__)

# key -> (table label, section, config overrides)
VARIANTS: dict[str, tuple[str, str, dict]] = {
    "full": ("DLF (full)", "", {}),
    "only_A": ("only A", "Different Modalities", {"modalities": "A"}),
    "only_V": ("only V", "Different Modalities", {"modalities": "V"}),
    "only_L": ("only L", "Different Modalities", {"modalities": "L"}),
    "L+A": ("L & A", "Different Modalities", {"modalities": "LA"}),
    "L+V": ("L & V", "Different Modalities", {"modalities": "LV"}),
    "L+V+A": ("L & V & A", "Different Modalities", {"modalities": "LVA"}),
    "no_Lr": ("w/o L_r", "Different Regularization", {"lambda_r": 0.0}),
    "no_Ls": ("w/o L_s", "Different Regularization", {"lambda_s": 0.0}),
    "no_Lm": ("w/o L_m", "Different Regularization", {"lambda_m": 0.0}),
    "no_Lo": ("w/o L_o", "Different Regularization", {"lambda_o": 0.0}),
    "no_FDM": ("w/o FDM", "Different Components", {"use_fdm": False}),
    "no_LFA": ("w/o LFA", "Different Components", {"use_lfa": False}),
    "no_HP": ("w/o HP", "Different Components", {"use_hp": False}),
}

COLUMNS = ("Acc-7", "Acc-2", "F1", "MAE")


class UnknownVariant(ValueError):
    def __init__(self, key: str):
        super().__init__(f"unknown variant {key!r}; choose from {', '.join(VARIANTS)}")


@dataclass
class AblationRow:
    key: str
    label: str
    section: str
    report: MetricReport
    epochs: int
    seconds: float

    def values(self) -> tuple[float, float, float, float]:
        r = self.report
        return r.acc7, r.acc2, r.f1, r.mae


def variant_config(base: RunConfig, key: str) -> RunConfig:
    if key not in VARIANTS:
        raise UnknownVariant(key)
    # each variant switches one thing relative to the full model
    reset = {"modalities": "LVA", "use_fdm": True, "use_lfa": True, "use_hp": True}
    return base.with_overrides({**reset, **VARIANTS[key][2]})


def run_ablation(dataset: Dataset, base: RunConfig, keys=None, split: str = "test") -> list[AblationRow]:
    keys = list(VARIANTS) if keys is None else list(keys)
    for k in keys:
        if k not in VARIANTS:
            raise UnknownVariant(k)
    rows = []
    for k in keys:
        cfg = variant_config(base, k)
        t0 = time.perf_counter()
        result = train(dataset, cfg)
        report = evaluate(result.model, dataset.splits[split])
        elapsed = time.perf_counter() - t0
        logger.info("%-10s MAE %.4f (%d epochs, %.1fs)", k, report.mae, len(result.history), elapsed)
        rows.append(AblationRow(k, VARIANTS[k][0], VARIANTS[k][1], report, len(result.history), elapsed))
    return rows


def format_markdown(rows: list[AblationRow]) -> str:
    lines = ["| Method | " + " | ".join(COLUMNS) + " |", "|---|" + "---|" * len(COLUMNS)]
    section = None
    for r in rows:
        if r.section != section and r.section:
            lines.append(f"| *{r.section}* |" + " |" * len(COLUMNS))
        section = r.section
        a7, a2, f1, mae = r.values()
        lines.append(f"| {r.label} | {100 * a7:.2f} | {100 * a2:.2f} | {100 * f1:.2f} | {mae:.3f} |")
    return "\n".join(lines) + "\n"


def write_csv(rows: list[AblationRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "Method", *COLUMNS])
        for r in rows:
            w.writerow([r.key, r.label, *(repr(float(v)) for v in r.values())])
