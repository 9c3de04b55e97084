"""Domain types and the representation-constraint algebra.

Groups are labelled 1..n_groups throughout. All types are immutable value
objects; numpy views exposed by QueryInstance are read-only caches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GroupTooSmall, Infeasible, LengthMismatch


@dataclass(frozen=True)
class Item:
    """One candidate document: features, relevance in [0, 1], group label."""

    item_id: str
    features: tuple
    relevance_true: float
    relevance_observed: float
    group: int

    def __post_init__(self):
        if not 0.0 <= self.relevance_true <= 1.0:
            raise ValueError(f"relevance_true out of [0,1]: {self.relevance_true}")
        if not 0.0 <= self.relevance_observed <= 1.0:
            raise ValueError(f"relevance_observed out of [0,1]: {self.relevance_observed}")
        if self.group < 1:
            raise ValueError(f"group labels are 1-based, got {self.group}")


@dataclass(frozen=True)
class QueryInstance:
    """One query's candidate set, partitioned into groups."""

    query_id: str
    items: tuple
    n_groups: int

    def __post_init__(self):
        ids = [it.item_id for it in self.items]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate item_ids in query {self.query_id}")
        for it in self.items:
            if it.group > self.n_groups:
                raise ValueError(
                    f"item {it.item_id} has group {it.group} > n_groups {self.n_groups}")

    @cached_property
    def group_sizes(self) -> tuple:
        counts = [0] * self.n_groups
        for it in self.items:
            counts[it.group - 1] += 1
        return tuple(counts)

    @cached_property
    def feature_matrix(self) -> np.ndarray:
        mat = np.array([it.features for it in self.items], dtype=np.float64)
        mat.setflags(write=False)
        return mat

    @cached_property
    def relevance_true_arr(self) -> np.ndarray:
        arr = np.array([it.relevance_true for it in self.items], dtype=np.float64)
        arr.setflags(write=False)
        return arr

    @cached_property
    def relevance_observed_arr(self) -> np.ndarray:
        arr = np.array([it.relevance_observed for it in self.items], dtype=np.float64)
        arr.setflags(write=False)
        return arr

    @cached_property
    def group_arr(self) -> np.ndarray:
        arr = np.array([it.group for it in self.items], dtype=np.int64)
        arr.setflags(write=False)
        return arr

    @cached_property
    def group_pools(self) -> tuple:
        """Per-group index arrays into self.items (group j at position j-1)."""
        pools = []
        for j in range(1, self.n_groups + 1):
            pools.append(np.flatnonzero(self.group_arr == j))
        return tuple(pools)

    @cached_property
    def item_ids(self) -> tuple:
        return tuple(it.item_id for it in self.items)

    @cached_property
    def id_to_index(self) -> dict:
        return {it.item_id: i for i, it in enumerate(self.items)}

    @cached_property
    def group_proportions(self) -> tuple:
        n = len(self.items)
        return tuple(s / n for s in self.group_sizes)


@dataclass(frozen=True)
class FairnessConstraints:
    """Per-group lower/upper counts for the top-k positions."""

    k: int
    lower: tuple
    upper: tuple

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError("k must be positive")
        if len(self.lower) != len(self.upper):
            raise ValueError("lower/upper length mismatch")
        for lo, up in zip(self.lower, self.upper):
            if lo < 0 or up < 0:
                raise ValueError("bounds must be non-negative")
            if lo > up:
                raise Infeasible(f"lower bound {lo} exceeds upper bound {up}")
        if sum(self.lower) > self.k or sum(self.upper) < self.k:
            raise Infeasible(
                f"need sum(L) <= k <= sum(U), got L={self.lower} U={self.upper} k={self.k}")

    @property
    def n_groups(self) -> int:
        return len(self.lower)

    def is_vacuous(self) -> bool:
        return all(lo == 0 for lo in self.lower) and all(up >= self.k for up in self.upper)


@dataclass(frozen=True)
class GroupAssignment:
    """Group label of each of the top-k ranks."""

    slots: tuple

    def __post_init__(self):
        if any(g < 1 for g in self.slots):
            raise ValueError("group labels are 1-based")

    @property
    def k(self) -> int:
        return len(self.slots)

    def group_counts(self, n_groups: int) -> tuple:
        counts = [0] * n_groups
        for g in self.slots:
            if g > n_groups:
                raise ValueError(f"group {g} > n_groups {n_groups}")
            counts[g - 1] += 1
        return tuple(counts)

    def positions_of(self, group: int) -> tuple:
        """Ranks (0-based) held by `group`, ascending."""
        return tuple(i for i, g in enumerate(self.slots) if g == group)


@dataclass(frozen=True)
class RankingOutcome:
    """An ordered top-k of item ids plus its group assignment."""

    ranked_items: tuple
    assignment: GroupAssignment

    def __post_init__(self):
        if len(self.ranked_items) != self.assignment.k:
            raise LengthMismatch(
                f"{len(self.ranked_items)} items vs assignment of length {self.assignment.k}")
        if len(set(self.ranked_items)) != len(self.ranked_items):
            raise ValueError("repeated item in ranking")


@dataclass(frozen=True)
class PositionDiscounts:
    """Per-rank weights of the relevance metric."""

    theta: tuple

    def __post_init__(self):
        if any(t < 0 for t in self.theta):
            raise ValueError("discounts must be non-negative")

    @property
    def k(self) -> int:
        return len(self.theta)

    @cached_property
    def as_array(self) -> np.ndarray:
        arr = np.array(self.theta, dtype=np.float64)
        arr.setflags(write=False)
        return arr

    @staticmethod
    def ndcg(k: int) -> "PositionDiscounts":
        """The standard DCG discounts 1/log2(i+1), i = 1..k."""
        return PositionDiscounts(tuple(1.0 / math.log2(i + 1) for i in range(1, k + 1)))


def validate_constraints(c: FairnessConstraints, q: QueryInstance) -> FairnessConstraints:
    """Clamp upper bounds to group sizes and re-check feasibility.

    Idempotent. Raises GroupTooSmall when a lower bound cannot be met by the
    query's pool, Infeasible when the clamped bounds admit no composition.
    """
    if c.n_groups != q.n_groups:
        raise ValueError(f"constraints cover {c.n_groups} groups, query has {q.n_groups}")
    sizes = q.group_sizes
    for j, (lo, size) in enumerate(zip(c.lower, sizes)):
        if lo > size:
            raise GroupTooSmall(f"group {j + 1}: lower bound {lo} > pool size {size}")
    clamped = tuple(min(up, size) for up, size in zip(c.upper, sizes))
    if sum(clamped) < c.k:
        raise Infeasible(
            f"sum of clamped upper bounds {sum(clamped)} < k={c.k}")
    return FairnessConstraints(k=c.k, lower=c.lower, upper=clamped)


def derive_constraints_from_delta(proportions, delta: float, k: int) -> FairnessConstraints:
    """Bounds (p_j - delta)k floored and (p_j + delta)k ceiled, clipped to [0, k]."""
    if delta < 0:
        raise ValueError("delta must be non-negative")
    total = sum(proportions)
    if not math.isclose(total, 1.0, rel_tol=0, abs_tol=1e-9):
        raise ValueError(f"proportions must sum to 1, got {total}")
    lower = tuple(max(0, math.floor((p - delta) * k)) for p in proportions)
    upper = tuple(min(k, math.ceil((p + delta) * k)) for p in proportions)
    # floor/ceil of a partition of unity can never empty the band
    assert sum(lower) <= k <= sum(upper)
    return FairnessConstraints(k=k, lower=lower, upper=upper)


def check_ex_post_fair(sigma: RankingOutcome, c: FairnessConstraints) -> bool:
    """True iff every group's count in sigma lies within its bounds."""
    if sigma.assignment.k != c.k:
        raise LengthMismatch(f"ranking length {sigma.assignment.k} != k {c.k}")
    counts = sigma.assignment.group_counts(c.n_groups)
    return all(lo <= n <= up for lo, n, up in zip(c.lower, counts, c.upper))


def per_query_constraints(queries, delta: float, k: int) -> dict:
    """Delta-band constraints from each query's own group proportions.

    Per-query proportions keep the bounds feasible against the query's
    actual pool sizes; the result is validated (upper bounds clamped).
    """
    out = {}
    for q in queries:
        c = derive_constraints_from_delta(q.group_proportions, delta, k)
        out[q.query_id] = validate_constraints(c, q)
    return out
