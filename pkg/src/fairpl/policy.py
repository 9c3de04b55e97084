"""The group-fair stochastic ranking policy.

A ranking is drawn in two steps: a fair group assignment from the uniform
two-step distribution (assignments module), then one group-restricted PL
draw per group, placed into that group's ranks in sampled order (first
sampled item takes the lowest rank). Every draw is ex-post fair by
construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .assignments import (CompositionTable, build_count_table, mu_log_prob,
                          sample_assignment, sample_assignments_batch)
from .core import (FairnessConstraints, GroupAssignment, QueryInstance, RankingOutcome,
                   check_ex_post_fair, validate_constraints)
from .errors import Exhausted, ItemNotInPool, TooLarge
from .plackett import log_prob_indices, sample_rankings_from_scores

EXACT_MAX_ITEMS = 8
EXACT_MAX_K = 4


def _scores_array(query: QueryInstance, scores) -> np.ndarray:
    if isinstance(scores, np.ndarray):
        if scores.shape != (len(query.items),):
            raise ValueError(f"scores shape {scores.shape} != ({len(query.items)},)")
        return np.asarray(scores, dtype=np.float64)
    mapping = getattr(scores, "scores", scores)
    try:
        return np.array([mapping[d] for d in query.item_ids], dtype=np.float64)
    except KeyError as exc:
        raise ItemNotInPool(f"no score for item {exc.args[0]!r}") from None


@dataclass(frozen=True)
class FairPolicy:
    """Immutable snapshot of (query, scores, validated constraints)."""

    query: QueryInstance
    constraints: FairnessConstraints
    scores: np.ndarray
    table: CompositionTable

    @staticmethod
    def build(query: QueryInstance, scores, constraints: FairnessConstraints) -> "FairPolicy":
        validated = validate_constraints(constraints, query)
        return FairPolicy(
            query=query,
            constraints=validated,
            scores=_scores_array(query, scores),
            table=build_count_table(validated),
        )

    @property
    def k(self) -> int:
        return self.constraints.k


def outcome_from_indices(query: QueryInstance, indices) -> RankingOutcome:
    """RankingOutcome for item indices into query.items."""
    groups = tuple(int(query.group_arr[i]) for i in indices)
    return RankingOutcome(
        ranked_items=tuple(query.item_ids[i] for i in indices),
        assignment=GroupAssignment(groups),
    )


def _indices_of(query: QueryInstance, outcome: RankingOutcome) -> np.ndarray:
    idx = query.id_to_index
    try:
        return np.array([idx[d] for d in outcome.ranked_items], dtype=np.int64)
    except KeyError as exc:
        raise ItemNotInPool(f"item {exc.args[0]!r} not in query") from None


def sample_fair_ranking(policy: FairPolicy, rng: np.random.Generator) -> RankingOutcome:
    """Draw one ex-post fair ranking from the policy."""
    gamma = sample_assignment(policy.table, policy.constraints, rng)
    ranked = [-1] * policy.k
    for j in range(1, policy.query.n_groups + 1):
        positions = gamma.positions_of(j)
        if not positions:
            continue
        pool = policy.query.group_pools[j - 1]
        sub = sample_rankings_from_scores(
            policy.scores[pool], len(positions), 1, rng)[0]
        for t, pos in enumerate(positions):
            ranked[pos] = int(pool[sub[t]])
    return outcome_from_indices(policy.query, ranked)


def sample_fair_rankings(policy: FairPolicy, n_samples: int,
                         rng: np.random.Generator) -> list:
    """Batch of n_samples draws; same distribution as sample_fair_ranking.

    Assignments are drawn first, then each group's sub-rankings in one
    kernel call (rows truncated to that draw's slot count; valid because a
    PL prefix has the marginal distribution of a shorter draw).
    """
    query = policy.query
    labels = sample_assignments_batch(policy.table, policy.constraints,
                                      n_samples, rng)
    ranked = np.full((n_samples, policy.k), -1, dtype=np.int64)
    for j in range(1, query.n_groups + 1):
        pool = query.group_pools[j - 1]
        if len(pool) == 0:
            continue
        mask = labels == j
        widths = mask.sum(axis=1)
        max_width = int(widths.max()) if n_samples else 0
        if max_width == 0:
            continue
        subs = sample_rankings_from_scores(
            policy.scores[pool], max_width, n_samples, rng)
        within = np.cumsum(mask, axis=1) - 1
        rows, cols = np.nonzero(mask)
        ranked[rows, cols] = pool[subs[rows, within[rows, cols]]]
    groups_by_row = labels
    ids = np.array(query.item_ids, dtype=object)
    out = []
    for s in range(n_samples):
        out.append(RankingOutcome(
            ranked_items=tuple(ids[ranked[s]]),
            assignment=GroupAssignment(tuple(int(g) for g in groups_by_row[s])),
        ))
    return out


def fair_policy_sampler(policy: FairPolicy, chunk: int = 256):
    """rng -> RankingOutcome closure that refills from batched draws."""
    buffer: list = []

    def sampler(rng):
        if not buffer:
            buffer.extend(sample_fair_rankings(policy, chunk, rng))
        return buffer.pop()

    return sampler


def plain_policy_sampler(query: QueryInstance, scores, k: int, chunk: int = 256):
    """Batched unconstrained-PL counterpart of fair_policy_sampler."""
    arr = _scores_array(query, scores)
    buffer: list = []

    def sampler(rng):
        if not buffer:
            subs = sample_rankings_from_scores(arr, k, chunk, rng)
            buffer.extend(outcome_from_indices(query, row) for row in subs)
        return buffer.pop()

    return sampler


def fair_ranking_log_prob(sigma: RankingOutcome, policy: FairPolicy):
    """Log probability of sigma under the policy; None when outside support.

    Non-fair rankings have probability zero; the None flag (rather than
    -inf) keeps NaNs out of downstream sums.
    """
    indices = _indices_of(policy.query, sigma)
    actual_groups = tuple(int(policy.query.group_arr[i]) for i in indices)
    if actual_groups != sigma.assignment.slots:
        raise ValueError("assignment does not match the items' groups")
    mu_lp = mu_log_prob(sigma.assignment, policy.table)
    if mu_lp is None:
        return None
    total = mu_lp
    for j in range(1, policy.query.n_groups + 1):
        sub = [i for i in indices if policy.query.group_arr[i] == j]
        if not sub:
            continue
        pool = policy.query.group_pools[j - 1]
        local = {int(g): t for t, g in enumerate(pool)}
        order = np.array([local[int(i)] for i in sub], dtype=np.int64)
        total += log_prob_indices(policy.scores[pool], order)
    return total


def enumerate_fair_rankings(policy: FairPolicy) -> list:
    """All ex-post fair rankings as RankingOutcomes (enumeration oracle)."""
    n = len(policy.query.items)
    if n > EXACT_MAX_ITEMS or policy.k > EXACT_MAX_K:
        raise TooLarge(f"n={n} items, k={policy.k} exceed the enumeration guard")
    out = []
    for perm in permutations(range(n), policy.k):
        outcome = outcome_from_indices(policy.query, perm)
        if check_ex_post_fair(outcome, policy.constraints):
            out.append(outcome)
    return out


def exact_fair_relevance(policy: FairPolicy, rho, theta) -> float:
    """Expected metric value by full enumeration over fair rankings."""
    rho_arr = _relevance_array(policy.query, rho)
    theta_arr = _theta_array(theta)
    if len(theta_arr) != policy.k:
        raise ValueError(f"theta length {len(theta_arr)} != k {policy.k}")
    total = 0.0
    for outcome in enumerate_fair_rankings(policy):
        lp = fair_ranking_log_prob(outcome, policy)
        if lp is None:
            continue
        indices = _indices_of(policy.query, outcome)
        total += np.exp(lp) * float(np.dot(theta_arr, rho_arr[indices]))
    return total


def sample_plain_ranking(query: QueryInstance, scores, k: int,
                         rng: np.random.Generator) -> RankingOutcome:
    """Unconstrained PL draw over the whole pool (baseline policy)."""
    arr = _scores_array(query, scores)
    idx = sample_rankings_from_scores(arr, k, 1, rng)[0]
    return outcome_from_indices(query, idx)


def rejection_sample_baseline(scores, c: FairnessConstraints, query: QueryInstance,
                              rng: np.random.Generator, max_trials: int):
    """Resample plain PL until a fair ranking appears.

    Returns (outcome, trials). Raises Exhausted after max_trials misses;
    expected trials are 1/(fair probability mass), which grows quickly as
    constraints tighten.
    """
    if max_trials < 1:
        raise ValueError("max_trials must be >= 1")
    validated = validate_constraints(c, query)
    arr = _scores_array(query, scores)
    for trial in range(1, max_trials + 1):
        idx = sample_rankings_from_scores(arr, validated.k, 1, rng)[0]
        outcome = outcome_from_indices(query, idx)
        if check_ex_post_fair(outcome, validated):
            return outcome, trial
    raise Exhausted(f"no fair ranking in {max_trials} trials")


def _relevance_array(query: QueryInstance, rho) -> np.ndarray:
    if rho is None:
        return query.relevance_observed_arr
    if isinstance(rho, np.ndarray):
        return np.asarray(rho, dtype=np.float64)
    return np.array([rho[d] for d in query.item_ids], dtype=np.float64)


def _theta_array(theta) -> np.ndarray:
    arr = getattr(theta, "as_array", None)
    if arr is not None:
        return arr
    return np.asarray(theta, dtype=np.float64)
