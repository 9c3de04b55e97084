"""Uniform sampling of fair group assignments.

Two steps: draw a bounded composition of k (how many slots each group gets)
uniformly over all feasible compositions, then a uniform random permutation
of the resulting multiset of group labels. Counting uses exact big-integer
arithmetic so step-1 uniformity is exact; counts overflow 64 bits already
around k=40 with 5 groups.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import FairnessConstraints, GroupAssignment
from .errors import Infeasible, TooLarge
from .rng import rand_below

ENUM_MAX_ASSIGNMENTS = 100_000


@dataclass(frozen=True)
class CompositionTable:
    """counts[j][s] = number of ways to pick x_1..x_j within bounds summing to s."""

    k: int
    lower: tuple
    upper: tuple
    counts: tuple

    @property
    def n_groups(self) -> int:
        return len(self.lower)

    @property
    def total(self) -> int:
        return self.counts[self.n_groups][self.k]


@lru_cache(maxsize=4096)
def _build_cached(k: int, lower: tuple, upper: tuple) -> CompositionTable:
    n_groups = len(lower)
    counts = [[0] * (k + 1) for _ in range(n_groups + 1)]
    counts[0][0] = 1
    for j in range(1, n_groups + 1):
        lo, up = lower[j - 1], upper[j - 1]
        prev = counts[j - 1]
        row = counts[j]
        for s in range(k + 1):
            acc = 0
            for x in range(lo, min(up, s) + 1):
                acc += prev[s - x]
            row[s] = acc
    table = CompositionTable(
        k=k, lower=lower, upper=upper,
        counts=tuple(tuple(row) for row in counts))
    if table.total == 0:
        raise Infeasible(f"no composition of {k} within L={lower}, U={upper}")
    return table


def build_count_table(c: FairnessConstraints) -> CompositionTable:
    """DP table over groups and partial sums; cached per (k, L, U)."""
    return _build_cached(c.k, tuple(c.lower), tuple(c.upper))


def sample_composition(table: CompositionTable, c: FairnessConstraints,
                       rng: np.random.Generator) -> tuple:
    """Exactly uniform draw over feasible compositions (backward walk)."""
    if table.total == 0:
        raise Infeasible("empty composition table")
    x = [0] * table.n_groups
    s = table.k
    for j in range(table.n_groups, 0, -1):
        lo, up = table.lower[j - 1], min(table.upper[j - 1], s)
        r = rand_below(rng, table.counts[j][s])
        prev = table.counts[j - 1]
        for val in range(lo, up + 1):
            ways = prev[s - val]
            if r < ways:
                x[j - 1] = val
                break
            r -= ways
        else:  # unreachable if the table is consistent
            raise Infeasible("composition walk failed")
        s -= x[j - 1]
    return tuple(x)


def sample_group_assignment(x, rng: np.random.Generator) -> GroupAssignment:
    """Uniform multiset permutation of x_1 ones, x_2 twos, ..."""
    labels = np.repeat(np.arange(1, len(x) + 1, dtype=np.int64), x)
    return GroupAssignment(tuple(int(g) for g in rng.permutation(labels)))


def sample_assignment(table: CompositionTable, c: FairnessConstraints,
                      rng: np.random.Generator) -> GroupAssignment:
    """One fair group assignment: composition, then multiset shuffle."""
    return sample_group_assignment(sample_composition(table, c, rng), rng)


# batch path: enumerate compositions once when the space is small
_BATCH_ENUM_CAP = 4096


@lru_cache(maxsize=1024)
def _composition_rows(k: int, lower: tuple, upper: tuple):
    c = FairnessConstraints(k=k, lower=lower, upper=upper)
    comps = enumerate_compositions(c)
    rows = np.stack([np.repeat(np.arange(1, len(x) + 1, dtype=np.int64), x)
                     for x in comps])
    return rows


def sample_assignments_batch(table: CompositionTable, c: FairnessConstraints,
                             n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """(n_samples, k) matrix of fair assignments; same distribution as
    sample_assignment (uniform composition, then per-row Fisher-Yates)."""
    if table.total <= _BATCH_ENUM_CAP:
        rows = _composition_rows(table.k, table.lower, table.upper)
        picks = rng.integers(0, rows.shape[0], size=n_samples)
        labels = rows[picks]
    else:
        labels = np.empty((n_samples, table.k), dtype=np.int64)
        for s in range(n_samples):
            x = sample_composition(table, c, rng)
            labels[s] = np.repeat(np.arange(1, len(x) + 1, dtype=np.int64), x)
    return rng.permuted(labels, axis=1)


def mu_log_prob(gamma: GroupAssignment, table: CompositionTable):
    """Log probability of `gamma` under the two-step distribution.

    Returns None when gamma's composition violates the bounds (outside the
    support): the flag avoids -inf floats leaking into later arithmetic.
    """
    x = gamma.group_counts(table.n_groups)
    if gamma.k != table.k:
        return None
    for val, lo, up in zip(x, table.lower, table.upper):
        if not lo <= val <= up:
            return None
    numerator = 1
    for val in x:
        numerator *= math.factorial(val)
    denominator = math.factorial(table.k) * table.total
    return math.log(numerator) - math.log(denominator)


def enumerate_compositions(c: FairnessConstraints) -> list:
    """All feasible compositions, lexicographic (test/oracle helper)."""
    ranges = [range(lo, up + 1) for lo, up in zip(c.lower, c.upper)]
    return [x for x in itertools.product(*ranges) if sum(x) == c.k]


def enumerate_assignments(c: FairnessConstraints) -> list:
    """All feasible group assignments (test/oracle helper; guarded)."""
    table = build_count_table(c)
    n_assignments = 0
    comps = enumerate_compositions(c)
    for x in comps:
        ways = math.factorial(c.k)
        for val in x:
            ways //= math.factorial(val)
        n_assignments += ways
    if n_assignments > ENUM_MAX_ASSIGNMENTS:
        raise TooLarge(f"{n_assignments} feasible assignments exceed the enumeration guard")
    out = []
    for x in comps:
        labels = []
        for j, val in enumerate(x, start=1):
            labels.extend([j] * val)
        out.extend(GroupAssignment(p) for p in sorted(set(itertools.permutations(labels))))
    return out
