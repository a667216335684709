"""Desk-scale extraction simulator.

A linear-softmax substitute is trained with analytic gradients on
victim-labeled queries. Per round, the guided arm synthesizes
class-targeted samples (round-robin over classes) and the random arm
draws uniform samples; both arms consume exactly the same per-round query
quota, so equal budgets are structural rather than conventional. Probe
evaluations measure clone agreement on a held-out set and are never
charged to the ledger.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .blackbox import Model, TopKConfig, VictimSpec, WrappedModel, class_regions, make_victim
from .core import QueryLedger, derive_seed, make_rng
from .masking import MaskerSpec
from .synthesis import SynthConfig, synthesize


@dataclass
class SubstituteModel(Model):
    """Linear-softmax clone with analytic gradients."""

    W: np.ndarray
    b: np.ndarray
    temperature: float = 1.0
    input_shape: tuple[int, ...] = ()

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b))):
            raise ValueError("substitute parameters must be finite")
        self.num_classes = self.W.shape[0]
        if not self.input_shape:
            self.input_shape = (self.W.shape[1],)

    def evaluate(self, batch: np.ndarray) -> np.ndarray:
        logits = (batch @ self.W.T + self.b) / self.temperature
        z = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def copy(self) -> "SubstituteModel":
        return SubstituteModel(self.W.copy(), self.b.copy(), self.temperature, self.input_shape)


def init_substitute(
    seed: int, num_classes: int, input_shape: tuple[int, ...], scale: float = 0.01
) -> SubstituteModel:
    n = math.prod(input_shape)
    rng = make_rng(derive_seed(seed, "substitute-init"))
    return SubstituteModel(
        W=rng.normal(0.0, scale, (num_classes, n)),
        b=np.zeros(num_classes),
        input_shape=tuple(input_shape),
    )


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.5
    epochs_per_round: int = 20
    minibatch: int = 64

    def __post_init__(self):
        if self.lr <= 0 or self.epochs_per_round < 1 or self.minibatch < 1:
            raise ValueError("bad training configuration")


def _clone_loss_batch(targets: np.ndarray, probs: np.ndarray, mode: str) -> float:
    """Mean KL (soft) or cross-entropy (hard) of wrapped targets vs probs."""
    eps = 1e-300
    if mode == "soft":
        ratio = np.where(targets > 0, targets / np.maximum(probs, eps), 1.0)
        per = np.sum(np.where(targets > 0, targets * np.log(ratio), 0.0), axis=1)
    else:
        per = -np.sum(
            np.where(targets > 0, targets * np.log(np.maximum(probs, eps)), 0.0), axis=1
        )
    return float(per.mean())


def train_substitute(
    sub: SubstituteModel,
    inputs: np.ndarray,
    targets: np.ndarray,
    mode: str,
    cfg: TrainConfig,
    seed: int = 0,
) -> tuple[SubstituteModel, float]:
    """Minibatch gradient descent on the clone loss.

    Both KL-to-distribution and CE-to-distribution have the same analytic
    logit gradient (probs - target) for a full wrapped target
    distribution, scaled by the substitute temperature.
    """
    if mode not in {"soft", "hard"}:
        raise ValueError("mode must be soft or hard")
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if inputs.shape[0] != targets.shape[0]:
        raise ValueError("inputs and targets disagree on batch size")
    sub = sub.copy()
    rng = make_rng(derive_seed(seed, "train"))
    n = inputs.shape[0]
    last_loss = _clone_loss_batch(targets, sub.evaluate(inputs), mode)
    for _ in range(cfg.epochs_per_round):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = order[start : start + cfg.minibatch]
            x = inputs[idx]
            probs = sub.evaluate(x)
            grad_logits = (probs - targets[idx]) / (len(idx) * sub.temperature)
            grad_w = grad_logits.T @ x
            grad_b = grad_logits.sum(axis=0)
            if not (np.all(np.isfinite(grad_w)) and np.all(np.isfinite(grad_b))):
                raise FloatingPointError(
                    "non-finite clone-loss gradient; aborting the round "
                    f"(lr={cfg.lr}, batch={len(idx)})"
                )
            sub.W = sub.W - cfg.lr * grad_w
            sub.b = sub.b - cfg.lr * grad_b
        last_loss = _clone_loss_batch(targets, sub.evaluate(inputs), mode)
    return sub, last_loss


@dataclass(frozen=True)
class ProbeConfig:
    n_probe: int = 256
    seed: int = 17
    kind: str = "uniform"  # uniform | region_boost
    boost: float = 0.6
    base_level: float = 0.2

    def __post_init__(self):
        if self.n_probe < 1:
            raise ValueError("n_probe must be positive")
        if self.kind not in {"uniform", "region_boost"}:
            raise ValueError("probe kind must be uniform or region_boost")


def make_probe(victim: Model, cfg: ProbeConfig) -> np.ndarray:
    """Held-out probe inputs, drawn independently of training queries.

    region_boost emits class-stratified samples with one class region
    raised above a flat background: a desk-scale stand-in for a
    class-balanced held-out test set.
    """
    rng = make_rng(derive_seed(cfg.seed, "probe"))
    n = victim.n_cells
    if cfg.kind == "uniform":
        return rng.uniform(0.0, 1.0, (cfg.n_probe, n))
    regions = class_regions(victim.input_shape, victim.num_classes)
    probes = np.full((cfg.n_probe, n), cfg.base_level, dtype=np.float64)
    probes += rng.uniform(-0.05, 0.05, probes.shape)
    for row in range(cfg.n_probe):
        cls = row % victim.num_classes
        probes[row, regions == cls] += cfg.boost
    return np.clip(probes, 0.0, 1.0)


def agreement(sub: Model, victim: Model, probe: np.ndarray) -> float:
    """Fraction of probe inputs with matching argmax (not budget-charged)."""
    a = np.argmax(sub.evaluate(probe), axis=1)
    b = np.argmax(victim.evaluate(probe), axis=1)
    return float(np.mean(a == b))


@dataclass(frozen=True)
class ExtractionConfig:
    victim: VictimSpec
    topk: TopKConfig
    masker: MaskerSpec
    query_budget: int
    rounds: int
    mode: str = "guided"  # guided | random
    samples_per_class: int = 1
    synth: SynthConfig | None = None
    train: TrainConfig = TrainConfig()
    probe: ProbeConfig = ProbeConfig()
    seed: int = 0

    def __post_init__(self):
        if self.mode not in {"guided", "random"}:
            raise ValueError("mode must be guided or random")
        if self.query_budget < 1 or self.rounds < 1 or self.samples_per_class < 1:
            raise ValueError("budget, rounds and samples_per_class must be positive")


@dataclass
class RoundRow:
    round: int
    queries_cum: int
    agreement: float
    min_class_count: int
    max_class_count: int


@dataclass
class ExtractionReport:
    rows: list[RoundRow]
    class_histogram: np.ndarray
    final_agreement: float
    queries_total: int
    truncated: bool
    mode: str
    probe_charged: bool = False  # probe evaluations are evaluation-only

    def ratio(self) -> float:
        """max/min class-count ratio of the training-query histogram."""
        top = float(self.class_histogram.max())
        bottom = float(self.class_histogram.min())
        return math.inf if bottom == 0 else top / bottom


def _round_quotas(budget: int, rounds: int) -> list[int]:
    base = budget // rounds
    quotas = [base] * rounds
    quotas[-1] += budget - base * rounds
    return quotas


def run_extraction(cfg: ExtractionConfig) -> ExtractionReport:
    """Rounds of (synthesize or sample) -> label through the wrapper ->
    train; reports per-round agreement and the class histogram of victim
    predictions over all labeled training queries."""
    victim = make_victim(cfg.victim)
    wrapped = WrappedModel(victim, cfg.topk)
    ledger = QueryLedger(budget=cfg.query_budget)
    mode_label = "soft" if cfg.topk.mode in {"soft", "all"} else "hard"
    sub = init_substitute(cfg.seed, victim.num_classes, victim.input_shape)
    probe = make_probe(victim, cfg.probe)
    histogram = np.zeros(victim.num_classes, dtype=np.int64)
    rows = [RoundRow(0, 0, agreement(sub, victim, probe), 0, 0)]
    train_x: list[np.ndarray] = []
    train_y: list[np.ndarray] = []
    truncated = False

    quotas = _round_quotas(cfg.query_budget, cfg.rounds)
    for round_idx, quota in enumerate(quotas, start=1):
        target_used = ledger.evals_used + quota
        new_x: list[np.ndarray] = []
        new_y: list[np.ndarray] = []

        if cfg.mode == "guided":
            if cfg.synth is None:
                raise ValueError("guided mode needs a synthesis configuration")
            n_jobs = victim.num_classes * cfg.samples_per_class
            per_job = max(2, (quota - n_jobs) // max(n_jobs, 1))
            for job in range(n_jobs):
                cls = job % victim.num_classes
                remaining = target_used - ledger.evals_used
                if remaining < 3:
                    break
                sub_ledger = QueryLedger(budget=min(per_job, remaining - 1))
                synth_cfg = SynthConfig(
                    target_class=cls,
                    masker=cfg.synth.masker,
                    weights=cfg.synth.weights,
                    schedule=cfg.synth.schedule,
                    search=cfg.synth.search,
                    seed=derive_seed(cfg.seed, "synth", round_idx, job),
                    clamp=cfg.synth.clamp,
                )
                result = synthesize(wrapped, sub, synth_cfg, sub_ledger)
                if sub_ledger.evals_used > 0:
                    ledger.charge(sub_ledger.evals_used, "synth")
                if result.victim_out is not None:
                    new_x.append(result.sample)
                    new_y.append(result.victim_out)

        # Fill the remainder of the quota with uniform labeled queries so
        # both arms consume exactly the same budget per round.
        pad = target_used - ledger.evals_used
        if pad > 0:
            rng = make_rng(derive_seed(cfg.seed, "pad", round_idx))
            batch = rng.uniform(0.0, 1.0, (pad, victim.n_cells))
            ledger.charge(pad, "query")
            outputs = wrapped.evaluate(batch)
            new_x.extend(batch)
            new_y.extend(outputs)

        for y in new_y:
            histogram[int(np.argmax(y))] += 1
        train_x.extend(new_x)
        train_y.extend(new_y)

        if train_x:
            sub, _ = train_substitute(
                sub,
                np.asarray(train_x),
                np.asarray(train_y),
                mode_label,
                cfg.train,
                seed=derive_seed(cfg.seed, "train", round_idx),
            )
        rows.append(
            RoundRow(
                round_idx,
                ledger.evals_used,
                agreement(sub, victim, probe),
                int(histogram.min()),
                int(histogram.max()),
            )
        )

    return ExtractionReport(
        rows=rows,
        class_histogram=histogram,
        final_agreement=rows[-1].agreement,
        queries_total=ledger.evals_used,
        truncated=truncated,
        mode=cfg.mode,
    )


def run_comparison(cfg: ExtractionConfig) -> dict[str, ExtractionReport]:
    """Both arms under one configuration; identical budgets by structure."""
    reports = {}
    for mode in ("guided", "random"):
        arm = ExtractionConfig(
            victim=cfg.victim,
            topk=cfg.topk,
            masker=cfg.masker,
            query_budget=cfg.query_budget,
            rounds=cfg.rounds,
            mode=mode,
            samples_per_class=cfg.samples_per_class,
            synth=cfg.synth,
            train=cfg.train,
            probe=cfg.probe,
            seed=cfg.seed,
        )
        reports[mode] = run_extraction(arm)
    cums_g = [r.queries_cum for r in reports["guided"].rows]
    cums_r = [r.queries_cum for r in reports["random"].rows]
    if cums_g != cums_r:
        raise AssertionError("arms consumed different budgets")
    return reports
