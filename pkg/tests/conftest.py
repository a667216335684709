import itertools
import math

import numpy as np
import pytest

from owenexplain import TableGame, make_rng


def random_table_game(n: int, seed: int) -> TableGame:
    rng = make_rng(seed)
    return TableGame(n, rng.uniform(-1.0, 1.0, 1 << n))


def additive_game(weights, base: float = 0.0) -> TableGame:
    w = np.asarray(weights, dtype=np.float64)
    n = w.size
    table = [base + sum(w[i] for i in range(n) if (bits >> i) & 1) for bits in range(1 << n)]
    return TableGame(n, table)


def unanimity_game(required, n: int) -> TableGame:
    need = sum(1 << i for i in required)
    return TableGame(n, [1.0 if bits & need == need else 0.0 for bits in range(1 << n)])


def permutation_shapley(game) -> np.ndarray:
    """Independent Shapley oracle: average marginal over all n! orderings."""
    n = game.n_atoms
    phi = np.zeros(n)
    count = 0
    for perm in itertools.permutations(range(n)):
        bits = 0
        for player in perm:
            before = game.table[bits]
            bits |= 1 << player
            phi[player] += game.table[bits] - before
        count += 1
    return phi / count


@pytest.fixture
def rng():
    return make_rng(12345)
