"""Central-difference gradient checking against the reverse pass."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autograd import Parameter, backward, get_precision, no_grad, record_kinks


class NondeterminismError(RuntimeError):
    pass


@dataclass
class ParamCheck:
    name: str
    checked: int
    max_rel_error: float
    max_abs_error: float
    skipped: int = 0  # sampled entries whose perturbation crossed a kink


@dataclass
class GradCheckReport:
    tolerance: float
    epsilon: float
    params: list[ParamCheck] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((p.max_rel_error for p in self.params), default=0.0)

    @property
    def passed(self) -> bool:
        return all(p.max_rel_error < self.tolerance for p in self.params)

    @property
    def failures(self) -> list[ParamCheck]:
        return [p for p in self.params if p.max_rel_error >= self.tolerance]

    @property
    def skipped(self) -> int:
        return sum(p.skipped for p in self.params)

    def by_module(self) -> dict[str, float]:
        """Worst relative error grouped by the first component of the name."""
        worst: dict[str, float] = {}
        for p in self.params:
            key = p.name.split(".", 1)[0]
            worst[key] = max(worst.get(key, 0.0), p.max_rel_error)
        return worst


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    """|a - n| / max(|a|, |n|, floor); the floor keeps near-zero gradients sane."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _same_branches(a: list, b: list) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def _difference(loss_fn, flat: np.ndarray, i: int, epsilon: float, base_kinks: list) -> float | None:
    """Central difference at entry ``i``; steps shrink (to 1e-7) while a kink
    is straddled, and None is returned if every step straddles one."""
    old = flat[i]
    steps = [epsilon] + [e for e in (epsilon / 10, epsilon / 100) if e >= 1e-7]
    try:
        for eps in steps:
            with no_grad():
                flat[i] = old + eps
                with record_kinks() as k_plus:
                    plus = loss_fn().item()
                flat[i] = old - eps
                with record_kinks() as k_minus:
                    minus = loss_fn().item()
            if _same_branches(base_kinks, k_plus) and _same_branches(base_kinks, k_minus):
                return (plus - minus) / (2.0 * eps)
    finally:
        flat[i] = old
    return None


def check_function(
    loss_fn: Callable[[], "Tensor"],  # noqa: F821
    parameters: Sequence[Parameter],
    epsilon: float = 1e-5,
    tolerance: float = 1e-4,
    samples_per_param: int | None = 16,
    seed: int = 0,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare analytic gradients of ``loss_fn`` with central differences.

    Parameters larger than ``samples_per_param`` scalars are checked on a
    deterministic sample of that many entries; ``None`` checks every entry.
    An entry whose +/- perturbation changes the branch taken by any relu,
    abs or zero-norm guard straddles a non-differentiable point; the
    difference quotient is meaningless there. Such entries are retried with
    smaller steps and, failing that, counted in ``skipped`` instead of
    compared.
    """
    if get_precision() != 64:
        raise RuntimeError("gradient checking requires 64-bit precision")
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon must lie in [1e-7, 1e-3], got {epsilon}")
    for p in parameters:
        if p.data.dtype != np.float64:
            raise RuntimeError(f"parameter {p.name!r} is not 64-bit; cast the model first")

    with record_kinks() as base_kinks:
        loss = loss_fn()
    with no_grad():
        again = loss_fn().item()
    if again != loss.item():
        raise NondeterminismError(
            "forward pass is not deterministic; disable dropout and other stochastic layers"
        )
    backward(loss, parameters)
    analytic = {id(p): p.grad.copy() for p in parameters}

    rng = np.random.default_rng(seed)
    report = GradCheckReport(tolerance=tolerance, epsilon=epsilon)
    for p in parameters:
        flat = p.data.reshape(-1)
        if samples_per_param is None or flat.size <= samples_per_param:
            idx = np.arange(flat.size)
        else:
            idx = np.sort(rng.choice(flat.size, size=samples_per_param, replace=False))
        grad = analytic[id(p)].reshape(-1)
        worst_rel = worst_abs = 0.0
        skipped = 0
        for i in idx:
            numeric = _difference(loss_fn, flat, i, epsilon, base_kinks)
            if numeric is None:
                skipped += 1
                continue
            worst_rel = max(worst_rel, relative_error(grad[i], numeric, floor))
            worst_abs = max(worst_abs, abs(grad[i] - numeric))
        report.params.append(ParamCheck(p.name, len(idx) - skipped, worst_rel, worst_abs, skipped))
    return report


def grad_check(
    model,
    batch,
    epsilon: float = 1e-5,
    tolerance: float = 1e-4,
    samples_per_param: int | None = 16,
    seed: int = 0,
) -> GradCheckReport:
    """Check the full training objective of ``model`` on ``batch``.

    The model is switched to evaluation mode so dropout cannot make the
    two-sided differences inconsistent.
    """
    model.eval()

    def loss_fn():
        return model.objective(batch, triplet_seed=seed)[0]

    return check_function(
        loss_fn, model.parameters(), epsilon, tolerance, samples_per_param, seed
    )


def tiny_problem(seed: int = 0):
    """64-bit tiny-config model and a 2-sample batch with opposite-sign labels,
    so the triplet term is active. Call inside ``precision(64)``."""
    from .config import tiny_config
    from .data import SyntheticSpec, gen_synthetic, stack
    from .model import DLFModel, feature_dims_of

    config = tiny_config(seed=seed)
    data = gen_synthetic(SyntheticSpec(n_train=16, n_valid=1, n_test=1, seed=seed))
    pos = next(s for s in data.splits["train"] if s.label > 0)
    neg = next(s for s in data.splits["train"] if s.label < 0)
    return DLFModel(config, feature_dims_of(data.dims)), stack([pos, neg])
