"""Budget-constrained hierarchical partition explainer.

The recursion bisects the partition tree, spending at most two new model
evaluations per expansion, and stops when the next expansion would exceed
max_evals. Un-expanded frontier nodes spread their credit uniformly over
their atoms, so attributions plus the base value reproduce the model
output at every budget.

Credit bookkeeping: an expansion computes the symmetrized two-player
split of the node span (children evaluated under the parent context with
the sibling off) and apportions the node's carried credit by that split's
ratio, with the right child receiving the exact remainder. This conserves
the credit sum through every step, keeps atoms the model ignores at
exactly zero, and is exact for additive games. Refinement priority is the
largest per-class absolute credit, so single-class and all-class requests
consume identical evaluation streams.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass

import numpy as np

from .blackbox import Model
from .core import PartitionTree, QueryLedger
from .masking import MaskerSpec
from .oracle import Attribution, VectorGame


class BudgetTooSmall(ValueError):
    """max_evals below the two root evaluations (CLI exit code 3)."""


REFINEMENT_ORDERS = ("priority_abs", "breadth_first")


@dataclass(frozen=True)
class ExplainConfig:
    masker: MaskerSpec
    tree: PartitionTree
    max_evals: int | None = 128
    target: int | str = "all"
    order: str = "priority_abs"
    prune_eps: float = 1e-12

    def __post_init__(self):
        if self.max_evals is not None and self.max_evals < 2:
            raise BudgetTooSmall("max_evals must be at least 2 (empty and full)")
        if self.order not in REFINEMENT_ORDERS:
            raise ValueError(f"order must be one of {REFINEMENT_ORDERS}")
        if self.tree.atom_count != self.masker.grid.atom_count:
            raise ValueError("tree and masker grid disagree on atom count")


def choose_depth(max_evals: int | None, tree: PartitionTree) -> int:
    """Largest frontier depth whose full expansion cost fits max_evals.

    Cost model: 2 root evaluations plus 2 per internal node expanded,
    cumulative over all depths below the frontier.
    """
    max_depth = max(node.depth for node in tree.nodes)
    if max_evals is None:
        return max_depth
    internal_at_depth = [0] * (max_depth + 1)
    for node in tree.nodes:
        if not node.is_leaf:
            internal_at_depth[node.depth] += 1
    cost = 2
    depth = 0
    for d in range(max_depth):
        cost += 2 * internal_at_depth[d]
        if cost > max_evals:
            break
        depth = d + 1
    return depth


@dataclass
class _Entry:
    node_id: int
    context: int
    v_context: np.ndarray
    v_context_node: np.ndarray
    credit: np.ndarray


def _split_credit(
    credit: np.ndarray, s_left: np.ndarray, s_right: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    span = s_left + s_right
    left = np.empty_like(credit)
    degenerate = np.abs(span) <= 1e-12 * np.maximum(np.abs(s_left), np.abs(s_right))
    safe = ~degenerate & (span != 0.0)
    left[safe] = credit[safe] * (s_left[safe] / span[safe])
    left[~safe] = 0.5 * credit[~safe]
    right = credit - left
    return left, right


def _explain_vector(
    x,
    model: Model,
    cfg: ExplainConfig,
    ledger: QueryLedger | None,
    step_hook=None,
):
    game = VectorGame(model, x, cfg.masker, ledger, tag="explain")
    tree = cfg.tree
    budget = cfg.max_evals

    root_bits = [0, game.full_bits]
    miss = game.misses(root_bits)
    if budget is not None and len(miss) > budget:
        raise BudgetTooSmall("max_evals below the two root evaluations")
    if ledger is not None and miss:
        ledger.charge(len(miss), "explain")
    game.evaluate_misses(miss)
    used = len(miss)
    v_empty = game.memo[0]
    v_full = game.memo[game.full_bits]

    root_entry = _Entry(0, 0, v_empty, v_full, v_full - v_empty)
    final: list[_Entry] = []

    if cfg.order == "priority_abs":
        heap: list[tuple[float, int, _Entry]] = []

        def push(entry: _Entry) -> None:
            heapq.heappush(heap, (-float(np.abs(entry.credit).max()), entry.node_id, entry))

        def pop() -> _Entry:
            return heapq.heappop(heap)[2]

        def pending() -> bool:
            return bool(heap)

        def drain() -> list[_Entry]:
            return [heapq.heappop(heap)[2] for _ in range(len(heap))]

        def waiting() -> list[_Entry]:
            return [item[2] for item in heap]

    else:
        queue: deque[_Entry] = deque()
        push = queue.append
        pop = queue.popleft

        def pending() -> bool:
            return bool(queue)

        def drain() -> list[_Entry]:
            out = list(queue)
            queue.clear()
            return out

        def waiting() -> list[_Entry]:
            return list(queue)

    depth_limit = choose_depth(budget, tree) if cfg.order == "breadth_first" else None
    push(root_entry)

    while pending():
        entry = pop()
        node = tree.nodes[entry.node_id]
        if node.is_leaf:
            final.append(entry)
            continue
        if float(np.abs(entry.credit).max()) <= cfg.prune_eps:
            final.append(entry)
            if cfg.order == "priority_abs":
                final.extend(drain())
                break
            continue
        if depth_limit is not None and node.depth >= depth_limit:
            final.append(entry)
            continue
        left = tree.nodes[node.left]
        right = tree.nodes[node.right]
        bits_left = entry.context | left.atoms.bits
        bits_right = entry.context | right.atoms.bits
        miss = game.misses([bits_left, bits_right])
        cost = len(miss)
        if budget is not None and used + cost > budget:
            final.append(entry)
            final.extend(drain())
            break
        if cost and ledger is not None and not ledger.try_charge(cost, "explain"):
            final.append(entry)
            final.extend(drain())
            break
        game.evaluate_misses(miss)
        used += cost
        v_left = game.memo[bits_left]
        v_right = game.memo[bits_right]
        s_left = 0.5 * ((v_left - entry.v_context) + (entry.v_context_node - v_right))
        s_right = 0.5 * ((v_right - entry.v_context) + (entry.v_context_node - v_left))
        credit_left, credit_right = _split_credit(entry.credit, s_left, s_right)
        push(_Entry(node.left, entry.context, entry.v_context, v_left, credit_left))
        push(_Entry(node.right, entry.context, entry.v_context, v_right, credit_right))
        if step_hook is not None:
            snapshot = [e.credit.copy() for e in final]
            snapshot.extend(e.credit.copy() for e in waiting())
            step_hook(snapshot)

    n_atoms = tree.atom_count
    values = np.zeros((n_atoms, model.num_classes), dtype=np.float64)
    for entry in final:
        atoms = tree.nodes[entry.node_id].atoms.indices()
        values[atoms, :] += entry.credit / len(atoms)
    return values, v_empty, used


def explain(
    x,
    model: Model,
    cfg: ExplainConfig,
    ledger: QueryLedger | None = None,
    step_hook=None,
) -> Attribution:
    """Single-class budgeted attribution. cfg.target must be a class index."""
    target = cfg.target
    if not isinstance(target, int):
        raise ValueError("explain needs an integer target class; use explain_all_classes")
    if not 0 <= target < model.num_classes:
        raise ValueError(f"target class {target} outside [0, {model.num_classes})")
    values, v_empty, used = _explain_vector(x, model, cfg, ledger, step_hook)
    return Attribution(
        values=values[:, target].copy(),
        base_value=float(v_empty[target]),
        method="partition",
        class_index=target,
        evals_used=used,
        max_evals=cfg.max_evals,
    )


def explain_all_classes(
    x,
    model: Model,
    cfg: ExplainConfig,
    ledger: QueryLedger | None = None,
) -> list[Attribution]:
    """One attribution per class from a single shared evaluation stream."""
    values, v_empty, used = _explain_vector(x, model, cfg, ledger)
    return [
        Attribution(
            values=values[:, c].copy(),
            base_value=float(v_empty[c]),
            method="partition",
            class_index=c,
            evals_used=used,
            max_evals=cfg.max_evals,
        )
        for c in range(model.num_classes)
    ]
