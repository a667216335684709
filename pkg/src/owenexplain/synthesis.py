"""Gradient-free class-targeted sample synthesis.

An elitist (1+lambda) evolution loop maximizes
alpha * class_objective(budgeted attribution toward the target class)
+ beta * disagreement(victim output, substitute output), with the
attribution budget following a staged decay schedule. The kept-best
objective trace is monotone non-decreasing and every victim access is
charged to the ledger.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .blackbox import Model
from .core import BudgetExhausted, QueryLedger, derive_seed, make_rng
from .explainer import ExplainConfig, explain
from .masking import MaskerSpec
from .objectives import ObjectiveWeights, class_objective, disagreement, saturated

SHAP_OFF = "shap_off"
AFTER_END_POLICIES = ("freeze_shap", "hold_last")

# Staging mirrors the reference decay run: 128/64/32 over three
# 500-step intervals, with attribution frozen afterwards.
DEFAULT_SCHEDULE_TEXT = "0:500:128,500:1000:64,1000:1500:32"
MIN_STAGE_EVALS = 32


@dataclass(frozen=True)
class DecaySchedule:
    """Contiguous ascending (start, end, max_evals) stages."""

    stages: tuple[tuple[int, int, int], ...]
    after_end: str = "freeze_shap"

    def __post_init__(self):
        if not self.stages:
            raise ValueError("schedule needs at least one stage")
        if self.after_end not in AFTER_END_POLICIES:
            raise ValueError(f"after_end must be one of {AFTER_END_POLICIES}")
        prev_end = None
        for start, end, evals in self.stages:
            if end <= start or evals < 2:
                raise ValueError(f"bad stage {(start, end, evals)}")
            if prev_end is not None and start != prev_end:
                raise ValueError("stage ranges must be contiguous and ascending")
            prev_end = end
        if self.stages[0][0] != 0:
            raise ValueError("first stage must start at step 0")


def parse_schedule(text: str, after_end: str = "freeze_shap") -> DecaySchedule:
    """Parse "start:end:max_evals,..." into a DecaySchedule."""
    stages = []
    for part in text.split(","):
        pieces = part.strip().split(":")
        if len(pieces) != 3:
            raise ValueError(f"bad schedule stage {part!r}")
        stages.append(tuple(int(p) for p in pieces))
    return DecaySchedule(tuple(stages), after_end)


def schedule_lookup(schedule: DecaySchedule, step: int):
    """max_evals for the stage containing step, or SHAP_OFF past the end
    under the freeze policy."""
    if step < 0:
        raise ValueError("step must be non-negative")
    for start, end, evals in schedule.stages:
        if start <= step < end:
            return evals
    if schedule.after_end == "hold_last":
        return schedule.stages[-1][2]
    return SHAP_OFF


@dataclass(frozen=True)
class SearchParams:
    population: int = 4
    mutation_rate: float = 0.1
    mutation_scale: float = 0.25
    steps: int = 100

    def __post_init__(self):
        if self.population < 1 or self.steps < 1:
            raise ValueError("population and steps must be >= 1")
        if not 0 < self.mutation_rate <= 1:
            raise ValueError("mutation_rate must be in (0, 1]")
        if self.mutation_scale <= 0:
            raise ValueError("mutation_scale must be positive")


@dataclass(frozen=True)
class SynthConfig:
    target_class: int
    masker: MaskerSpec
    weights: ObjectiveWeights = ObjectiveWeights()
    schedule: DecaySchedule = field(
        default_factory=lambda: parse_schedule(DEFAULT_SCHEDULE_TEXT)
    )
    search: SearchParams = SearchParams()
    seed: int = 0
    clamp: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        lo, hi = self.clamp
        if not lo < hi:
            raise ValueError("clamp range must satisfy lo < hi")


@dataclass
class TraceRow:
    step: int
    objective: float
    class_obj_term: float
    disagreement_term: float
    evals_used_cum: int


@dataclass
class SynthResult:
    sample: np.ndarray
    trace: list[TraceRow]
    truncated: bool
    victim_out: np.ndarray | None
    objective: float


def _uniform_substitute(num_classes: int) -> np.ndarray:
    return np.full(num_classes, 1.0 / num_classes)


def synthesize(
    victim: Model,
    substitute: Model | None,
    cfg: SynthConfig,
    ledger: QueryLedger | None = None,
    tree=None,
    workers: int = 1,
) -> SynthResult:
    """Elitist (1+lambda) search for a sample targeting cfg.target_class.

    Deterministic under cfg.seed and independent of the worker count.
    Budget exhaustion mid-run returns the best-so-far with the truncation
    flag set.
    """
    from .core import build_partition_tree

    if tree is None:
        tree = build_partition_tree(cfg.masker.grid)
    n_cells = cfg.masker.grid.n_cells
    if n_cells != victim.n_cells:
        raise ValueError("masker grid does not match the victim input")
    lo, hi = cfg.clamp
    rng = make_rng(derive_seed(cfg.seed, "synth-init"))
    alpha, beta = cfg.weights.alpha, cfg.weights.beta

    def objective(x: np.ndarray, step: int):
        """(objective, class term, disagreement term, victim output)."""
        class_term = 0.0
        victim_out = None
        stage = schedule_lookup(cfg.schedule, step)
        if alpha > 0 and stage is not SHAP_OFF:
            explain_cfg = ExplainConfig(
                masker=cfg.masker,
                tree=tree,
                max_evals=stage,
                target=cfg.target_class,
                order="priority_abs",
            )
            attr = explain(x, victim, explain_cfg, ledger)
            class_term = class_objective(attr)
        dis_term = 0.0
        if beta > 0:
            if ledger is not None:
                ledger.charge(1, "synth.disagree")
            victim_out = victim.evaluate_one(x)
            sub_out = (
                substitute.evaluate_one(x)
                if substitute is not None
                else _uniform_substitute(victim.num_classes)
            )
            dis_term = saturated(disagreement(victim_out, sub_out))
        return alpha * class_term + beta * dis_term, class_term, dis_term, victim_out

    def worst_case_cost(step: int) -> int:
        cost = 0
        stage = schedule_lookup(cfg.schedule, step)
        if alpha > 0 and stage is not SHAP_OFF:
            cost += stage
        if beta > 0:
            cost += 1
        return cost

    best = np.clip(rng.uniform(lo, hi, n_cells), lo, hi)
    trace: list[TraceRow] = []
    truncated = False
    best_victim_out = None

    def used() -> int:
        return ledger.evals_used if ledger is not None else 0

    # With beta=0 the search never queries the victim directly, but the
    # caller still needs the best sample's full output; reserve that one
    # labeling evaluation now so exhaustion cannot strand an unlabeled
    # sample at the end.
    label_reserved = False
    if beta == 0 and ledger is not None:
        if not ledger.try_charge(1, "synth.label"):
            return SynthResult(best, trace, True, None, float("-inf"))
        label_reserved = True

    try:
        best_obj, best_class, best_dis, best_victim_out = objective(best, 0)
    except BudgetExhausted:
        if label_reserved:
            best_victim_out = victim.evaluate_one(best)
        return SynthResult(best, trace, True, best_victim_out, float("-inf"))

    lam = cfg.search.population
    n_mut = max(1, int(round(cfg.search.mutation_rate * n_cells)))
    scale = cfg.search.mutation_scale * (hi - lo)

    for step in range(cfg.search.steps):
        candidates = []
        for j in range(lam):
            mut_rng = make_rng(derive_seed(cfg.seed, "synth-mut", step, j))
            cells = mut_rng.choice(n_cells, size=n_mut, replace=False)
            cand = best.copy()
            cand[cells] = np.clip(cand[cells] + mut_rng.normal(0.0, scale, n_mut), lo, hi)
            candidates.append(cand)

        results = []
        remaining = ledger.remaining if ledger is not None else None
        parallel = (
            workers > 1
            and len(candidates) > 1
            and (remaining is None or remaining >= lam * worst_case_cost(step))
        )
        try:
            if parallel:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    results = list(
                        pool.map(lambda c: objective(c, step), candidates)
                    )
            else:
                for cand in candidates:
                    results.append(objective(cand, step))
        except BudgetExhausted:
            truncated = True
            trace.append(TraceRow(step, best_obj, best_class, best_dis, used()))
            break

        pick = max(range(lam), key=lambda j: (results[j][0], -j))
        if results[pick][0] > best_obj:
            best = candidates[pick]
            best_obj, best_class, best_dis, best_victim_out = results[pick]
        trace.append(TraceRow(step, best_obj, best_class, best_dis, used()))

    if best_victim_out is None:
        if label_reserved:
            best_victim_out = victim.evaluate_one(best)
        else:
            try:
                if ledger is not None:
                    ledger.charge(1, "synth.label")
                best_victim_out = victim.evaluate_one(best)
            except BudgetExhausted:
                truncated = True

    return SynthResult(best, trace, truncated, best_victim_out, best_obj)
