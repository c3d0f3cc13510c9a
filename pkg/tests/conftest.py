import itertools
import math

import numpy as np
import pytest

from ordershap import (
    CoalitionValueOracle,
    InProcessEndpoint,
    InterventionSpec,
    OccurrenceIntervention,
    OrderIntervention,
    task_rule_model,
)


def random_oracle(n: int, seed: int, occurrence_only: bool = False) -> CoalitionValueOracle:
    """Tabulated random game over the 2n features (or the n occurrence ones)."""
    rng = np.random.default_rng([seed, n])
    size = 1 << (2 * n)
    if occurrence_only:
        occ_table = rng.normal(size=1 << n)
        return CoalitionValueOracle(n, lambda c: float(occ_table[c.occurrence_mask]))
    table = rng.normal(size=size)
    return CoalitionValueOracle(n, lambda c: float(table[c.mask]))


def classic_shapley_enum(n: int, v) -> np.ndarray:
    """Direct subset-sum Shapley enumeration; v maps a member set to a value."""
    phi = np.zeros(n)
    for i in range(n):
        others = [j for j in range(n) if j != i]
        for r in range(n):
            for team in itertools.combinations(others, r):
                w = math.factorial(r) * math.factorial(n - r - 1) / math.factorial(n)
                phi[i] += w * (v(frozenset(team) | {i}) - v(frozenset(team)))
    return phi


def brute_force_osv(tokens, vocab, mode, f):
    """Reference OSV: direct enumeration over coalitions, order supports, and
    replacement combinations, with none of the engine's memoization."""
    n = len(tokens)
    order = OrderIntervention(mode)

    def coalition_value(occ_mask, ord_mask):
        retained_ord = [i for i in range(n) if ord_mask >> i & 1]
        free = [i for i in range(n) if not occ_mask >> i & 1]
        support = order.support(n, retained_ord)
        total = 0.0
        for z in support:
            inner = 0.0
            for combo in itertools.product(vocab, repeat=len(free)):
                x = list(tokens)
                for pos, tok in zip(free, combo):
                    x[pos] = tok
                realized = [None] * n
                for i in range(n):
                    realized[z[i]] = x[i]
                inner += f(tuple(realized))
            total += inner / (len(vocab) ** len(free))
        return total / len(support)

    values = {}
    for mask in range(1 << (2 * n)):
        values[mask] = coalition_value(mask & ((1 << n) - 1), mask >> n)
    phi = np.zeros(2 * n)
    p = 2 * n
    for mask, val in values.items():
        s = bin(mask).count("1")
        for i in range(p):
            bit = 1 << i
            if mask & bit:
                continue
            w = math.factorial(s) * math.factorial(p - s - 1) / math.factorial(p)
            phi[i] += w * (values[mask | bit] - val)
    return phi


@pytest.fixture
def task1_endpoint():
    return InProcessEndpoint(task_rule_model("task1"))


@pytest.fixture
def small_vocab_spec():
    return InterventionSpec(
        OccurrenceIntervention.uniform(range(6)), OrderIntervention("absolute")
    )
