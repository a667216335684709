"""Ground-truth attribution engines.

exact_shapley enumerates every coalition (guarded at 20 atoms),
exact_owen computes the standard two-stage coalitional value over an
explicit partition, and group_uniform_shapley plays the group-level game
and splits each group's credit uniformly. All engines accept any object
with ``n_atoms``, ``value(bits)`` and ``value_batch(masks)``; the masked
model game below builds that from a model, an input and a masker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .blackbox import Model
from .core import QueryLedger
from .masking import BoundMasker, MaskerSpec

SHAPLEY_MAX_ATOMS = 20
OWEN_MAX_GROUPS = 12
OWEN_MAX_GROUP_SIZE = 12
_CHUNK = 4096


@dataclass
class Attribution:
    """Per-atom attribution plus the base value and evaluation count."""

    values: np.ndarray
    base_value: float
    method: str
    class_index: int | None
    evals_used: int
    max_evals: int | None = None

    @property
    def n_atoms(self) -> int:
        return int(self.values.size)

    def total(self) -> float:
        return float(self.values.sum())


class VectorGame:
    """Memoized coalition -> probability-vector game.

    A memo hit is free; a miss charges the ledger exactly one evaluation.
    One instance serves every class of an explanation, so multi-class
    attributions share a single evaluation stream.
    """

    def __init__(
        self,
        model: Model,
        x,
        masker: MaskerSpec,
        ledger: QueryLedger | None = None,
        tag: str = "explain",
    ):
        self.model = model
        self.masker = BoundMasker(x, masker)
        if masker.grid.n_cells != model.n_cells:
            raise ValueError("masker grid does not match the model input shape")
        self.ledger = ledger
        self.tag = tag
        self.n_atoms = masker.grid.atom_count
        self.full_bits = (1 << self.n_atoms) - 1
        self.memo: dict[int, np.ndarray] = {}
        self.evals_used = 0

    def misses(self, bits_list) -> list[int]:
        seen = set()
        out = []
        for bits in bits_list:
            if bits not in self.memo and bits not in seen:
                seen.add(bits)
                out.append(bits)
        return out

    def evaluate_misses(self, miss_list) -> None:
        """Evaluate coalitions assumed already charged to the ledger."""
        if not miss_list:
            return
        outputs = self.model.evaluate(self.masker.masked_batch(miss_list))
        for bits, row in zip(miss_list, outputs):
            row = np.asarray(row, dtype=np.float64)
            row.setflags(write=False)
            self.memo[bits] = row
        self.evals_used += len(miss_list)

    def value_vector(self, bits: int) -> np.ndarray:
        miss = self.misses([bits])
        if miss:
            if self.ledger is not None:
                self.ledger.charge(len(miss), self.tag)
            self.evaluate_misses(miss)
        return self.memo[bits]


class ClassGame:
    """Scalar view of a VectorGame for one output class."""

    def __init__(self, vector_game: VectorGame, class_index: int):
        if not 0 <= class_index < vector_game.model.num_classes:
            raise ValueError("class index outside the model output")
        self.vector_game = vector_game
        self.class_index = class_index
        self.n_atoms = vector_game.n_atoms

    @property
    def evals_used(self) -> int:
        return self.vector_game.evals_used

    def value(self, bits: int) -> float:
        return float(self.vector_game.value_vector(bits)[self.class_index])

    def value_batch(self, masks: np.ndarray) -> np.ndarray:
        out = np.empty(len(masks), dtype=np.float64)
        game = self.vector_game
        for start in range(0, len(masks), _CHUNK):
            chunk = [int(m) for m in masks[start : start + _CHUNK]]
            miss = game.misses(chunk)
            if miss:
                if game.ledger is not None:
                    game.ledger.charge(len(miss), game.tag)
                game.evaluate_misses(miss)
            for j, bits in enumerate(chunk):
                out[start + j] = game.memo[bits][self.class_index]
        return out


class TableGame:
    """Synthetic game backed by a dense 2**n value table (tests, oracles)."""

    def __init__(self, n_atoms: int, values):
        self.n_atoms = n_atoms
        self.table = np.asarray(values, dtype=np.float64)
        if self.table.shape != (1 << n_atoms,):
            raise ValueError("table must have 2**n_atoms entries")
        self.evals_used = 0

    @classmethod
    def from_function(cls, n_atoms: int, fn) -> "TableGame":
        table = [fn(bits) for bits in range(1 << n_atoms)]
        return cls(n_atoms, table)

    def value(self, bits: int) -> float:
        self.evals_used += 1
        return float(self.table[bits])

    def value_batch(self, masks) -> np.ndarray:
        masks = np.asarray(masks, dtype=np.int64)
        self.evals_used += len(masks)
        return self.table[masks]


def shapley_weights(n: int) -> np.ndarray:
    """w[s] = s!(n-s-1)!/n! via log-factorials (overflow-safe)."""
    lg = [math.lgamma(k + 1) for k in range(n + 1)]
    return np.array(
        [math.exp(lg[s] + lg[n - s - 1] - lg[n]) for s in range(n)], dtype=np.float64
    )


def _full_table(game) -> np.ndarray:
    masks = np.arange(1 << game.n_atoms, dtype=np.int64)
    return np.asarray(game.value_batch(masks), dtype=np.float64)


def exact_shapley(game, n_atoms: int | None = None) -> Attribution:
    """Exact Shapley values by full subset enumeration."""
    n = game.n_atoms if n_atoms is None else n_atoms
    if n != game.n_atoms:
        raise ValueError("n_atoms does not match the game")
    if n > SHAPLEY_MAX_ATOMS:
        raise ValueError(f"exact_shapley guard: {n} atoms > {SHAPLEY_MAX_ATOMS}")
    before = game.evals_used
    table = _full_table(game)
    phi = _kernels.shapley_from_table(table, n)
    return Attribution(
        values=np.asarray(phi, dtype=np.float64),
        base_value=float(table[0]),
        method="exact_shapley",
        class_index=getattr(game, "class_index", None),
        evals_used=game.evals_used - before,
    )


def _check_partition(partition, n: int) -> list[list[int]]:
    groups = [sorted(int(i) for i in g) for g in partition]
    flat = [i for g in groups for i in g]
    if sorted(flat) != list(range(n)):
        raise ValueError("groups must partition the atom set exactly")
    if len(groups) > OWEN_MAX_GROUPS:
        raise ValueError(f"owen guard: more than {OWEN_MAX_GROUPS} groups")
    if any(len(g) > OWEN_MAX_GROUP_SIZE for g in groups):
        raise ValueError(f"owen guard: group larger than {OWEN_MAX_GROUP_SIZE}")
    return groups


def exact_owen(game, partition) -> Attribution:
    """Two-stage coalitional value: groups bargain first, members second.

    phi_i = sum over coalitions Q of other groups and subsets S of i's own
    group of w_m(|Q|) * w_g(|S|) * [v(U(Q) u S u {i}) - v(U(Q) u S)].
    Coincides with exact_shapley under singleton groups.
    """
    n = game.n_atoms
    groups = _check_partition(partition, n)
    m = len(groups)
    before = game.evals_used
    group_bits = [sum(1 << i for i in g) for g in groups]
    outer_w = shapley_weights(m)
    phi = np.zeros(n, dtype=np.float64)

    for gi, members in enumerate(groups):
        others = [group_bits[h] for h in range(m) if h != gi]
        inner_w = shapley_weights(len(members))
        # Enumerate the union-of-other-groups contexts once per group.
        contexts = []
        for qbits in range(1 << len(others)):
            ctx = 0
            for h, gb in enumerate(others):
                if (qbits >> h) & 1:
                    ctx |= gb
            contexts.append((qbits.bit_count(), ctx))
        # Unique masks needed: ctx | S for all S within the group.
        sub_masks = []
        for s_bits in range(1 << len(members)):
            s_mask = 0
            for j, atom in enumerate(members):
                if (s_bits >> j) & 1:
                    s_mask |= 1 << atom
            sub_masks.append(s_mask)
        needed = sorted({ctx | s for _, ctx in contexts for s in sub_masks})
        values = dict(zip(needed, game.value_batch(np.asarray(needed, dtype=np.int64))))
        for j, atom in enumerate(members):
            bit = 1 << atom
            acc = 0.0
            for q_size, ctx in contexts:
                wq = outer_w[q_size]
                for s_bits in range(1 << len(members)):
                    if (s_bits >> j) & 1:
                        continue
                    s_mask = sub_masks[s_bits]
                    ws = inner_w[s_bits.bit_count()]
                    base = ctx | s_mask
                    acc += wq * ws * (values[base | bit] - values[base])
            phi[atom] = acc

    empty = float(game.value(0))
    return Attribution(
        values=phi,
        base_value=empty,
        method="exact_owen",
        class_index=getattr(game, "class_index", None),
        evals_used=game.evals_used - before,
    )


def group_uniform_shapley(game, partition) -> Attribution:
    """Group-level exact Shapley, split uniformly across each group's atoms."""
    n = game.n_atoms
    groups = _check_partition(partition, n)
    m = len(groups)
    if 1 << m > 4096:
        raise ValueError("owen guard: more than 2**12 group coalitions")
    before = game.evals_used
    group_bits = [sum(1 << i for i in g) for g in groups]
    masks = np.empty(1 << m, dtype=np.int64)
    for q in range(1 << m):
        bits = 0
        for h in range(m):
            if (q >> h) & 1:
                bits |= group_bits[h]
        masks[q] = bits
    table = np.asarray(game.value_batch(masks), dtype=np.float64)
    group_phi = _kernels.shapley_from_table(table, m)
    phi = np.zeros(n, dtype=np.float64)
    for gi, members in enumerate(groups):
        phi[members] = group_phi[gi] / len(members)
    return Attribution(
        values=phi,
        base_value=float(table[0]),
        method="group_uniform",
        class_index=getattr(game, "class_index", None),
        evals_used=game.evals_used - before,
    )


def masked_game(
    model: Model,
    x,
    masker: MaskerSpec,
    class_index: int,
    ledger: QueryLedger | None = None,
    tag: str = "oracle",
) -> ClassGame:
    """Scalar coalition game from (model, input, masker, class)."""
    game = ClassGame(VectorGame(model, x, masker, ledger, tag), class_index)
    return game
