"""Score-gradient estimators for the fair expected-relevance objective.

The sampled estimator draws fair group assignments, then one group-restricted
PL ranking per group, and feeds each sample through the suffix-reward /
cumulative-ratio statistics (future reward plus exp(score) times the
discount-over-denominator and reward-over-denominator running sums). The
group assignment does not depend on the scores, so its draw contributes no
gradient term. A REINFORCE estimator and two enumeration oracles (analytic
and finite-difference) cross-check unbiasedness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .assignments import build_count_table, sample_assignment
from .core import FairnessConstraints, QueryInstance, validate_constraints
from .errors import ShapeMismatch
from .plackett import denominators_indices, shifted_weights
from .policy import (FairPolicy, _relevance_array, _scores_array, _theta_array,
                     enumerate_fair_rankings, exact_fair_relevance, fair_ranking_log_prob,
                     sample_fair_ranking)


@dataclass(frozen=True)
class GradientVector:
    """Per-item partial derivatives of the objective w.r.t. log scores."""

    item_ids: tuple
    values: np.ndarray

    def __getitem__(self, item_id: str) -> float:
        return float(self.values[self.item_ids.index(item_id)])

    def as_dict(self) -> dict:
        return {d: float(v) for d, v in zip(self.item_ids, self.values)}


@dataclass(frozen=True)
class PerSampleStats:
    """Per-position statistics of one group sub-ranking sample.

    placed_reward[t] = theta_t * rho of the item placed at position t;
    future_reward[t] = reward strictly after t (non-increasing when rho and
    theta are non-negative); denominators[t] = remaining-pool weight sum at
    t; discount_ratio_cum/reward_ratio_cum are the running sums of
    theta_t/Z_t and inclusive-suffix-reward/Z_t that the estimator consumes.
    All arrays have one entry per occupied position.
    """

    placed_reward: np.ndarray
    future_reward: np.ndarray
    denominators: np.ndarray
    discount_ratio_cum: np.ndarray
    reward_ratio_cum: np.ndarray


def plrank3_stats(sigma_j, ranks, pool, m, rho, theta) -> PerSampleStats:
    """The statistics behind plrank3_group_gradient, for one sample."""
    pool = list(pool)
    if len(sigma_j) != len(ranks):
        raise ShapeMismatch(f"{len(sigma_j)} placed items vs {len(ranks)} ranks")
    index = {d: i for i, d in enumerate(pool)}
    chosen = np.array([index[d] for d in sigma_j], dtype=np.int64)
    theta_arr = _theta_array(theta)[np.asarray(ranks, dtype=np.int64)]
    scores = np.array([m[d] for d in pool], dtype=np.float64)
    rho_arr = np.array([rho[d] for d in pool], dtype=np.float64)
    weights, _ = shifted_weights(scores)
    z = denominators_indices(weights, chosen)
    placed = theta_arr * rho_arr[chosen]
    suffix_incl = np.cumsum(placed[::-1])[::-1]
    future = np.concatenate([suffix_incl[1:], [0.0]])
    return PerSampleStats(
        placed_reward=placed,
        future_reward=future,
        denominators=z,
        discount_ratio_cum=np.cumsum(theta_arr / z),
        reward_ratio_cum=np.cumsum(suffix_incl / z),
    )


def plrank3_group_gradient(sigma_j, ranks, pool, m, rho, theta) -> dict:
    """Single-sample contribution map for one group's sub-ranking.

    sigma_j: item ids placed into the group's ranks, in placement order.
    ranks: the global ranks the group received (0-based, ascending).
    pool: all item ids of the group; m/rho: score and relevance per id;
    theta: full-ranking position discounts.
    """
    pool = list(pool)
    if len(sigma_j) != len(ranks):
        raise ShapeMismatch(f"{len(sigma_j)} placed items vs {len(ranks)} ranks")
    if sorted(ranks) != list(ranks):
        raise ShapeMismatch("ranks must be ascending")
    index = {d: i for i, d in enumerate(pool)}
    chosen = np.array([index[d] for d in sigma_j], dtype=np.int64)
    theta_arr = _theta_array(theta)
    scores = np.array([m[d] for d in pool], dtype=np.float64)
    rho_arr = np.array([rho[d] for d in pool], dtype=np.float64)
    weights, _ = shifted_weights(scores)
    out = np.zeros(len(pool), dtype=np.float64)
    offsets = np.array([0, len(chosen)], dtype=np.int64)
    _kernels.plrank3_accumulate(
        weights, rho_arr, theta_arr[np.asarray(ranks, dtype=np.int64)],
        chosen, offsets, out)
    return {d: float(v) for d, v in zip(pool, out)}


def algorithm1_gradient(query: QueryInstance, m, c: FairnessConstraints, theta,
                        n_samples: int, rng: np.random.Generator,
                        rho=None) -> GradientVector:
    """Monte-Carlo gradient of the fair objective from n_samples assignment draws.

    One group-restricted PL sample per group per assignment; per-group
    contributions are averaged over draws and summed across groups.
    """
    validated = validate_constraints(c, query)
    table = build_count_table(validated)
    scores = _scores_array(query, m)
    rho_arr = _relevance_array(query, rho)
    theta_arr = _theta_array(theta)
    if len(theta_arr) != validated.k:
        raise ShapeMismatch(f"theta length {len(theta_arr)} != k {validated.k}")

    draws = [sample_assignment(table, validated, rng) for _ in range(n_samples)]
    values = np.zeros(len(query.items), dtype=np.float64)
    for j in range(1, query.n_groups + 1):
        pool = query.group_pools[j - 1]
        if len(pool) == 0:
            continue
        pos_lists = [gamma.positions_of(j) for gamma in draws]
        widths = np.fromiter((len(p) for p in pos_lists), dtype=np.int64, count=n_samples)
        max_width = int(widths.max()) if n_samples else 0
        if max_width == 0:
            continue
        weights, _ = shifted_weights(scores[pool])
        uniforms = rng.random((n_samples, max_width))
        subs = _kernels.sample_pl_rankings(weights, max_width, uniforms)

        offsets = np.zeros(n_samples + 1, dtype=np.int64)
        np.cumsum(widths, out=offsets[1:])
        theta_flat = np.empty(offsets[-1], dtype=np.float64)
        rank_flat = np.empty(offsets[-1], dtype=np.int64)
        for t, positions in enumerate(pos_lists):
            lo, hi = offsets[t], offsets[t + 1]
            theta_flat[lo:hi] = theta_arr[list(positions)]
            rank_flat[lo:hi] = subs[t, : hi - lo]
        group_out = np.zeros(len(pool), dtype=np.float64)
        _kernels.plrank3_accumulate(weights, rho_arr[pool], theta_flat,
                                    rank_flat, offsets, group_out)
        values[pool] += group_out / n_samples
    return GradientVector(query.item_ids, values)


def plain_plrank3_gradient(query: QueryInstance, m, theta, n_samples: int,
                           rng: np.random.Generator, rho=None) -> GradientVector:
    """Unconstrained PL-Rank-3 over the whole pool (baseline trainer path)."""
    scores = _scores_array(query, m)
    rho_arr = _relevance_array(query, rho)
    theta_arr = _theta_array(theta)
    k = len(theta_arr)
    weights, _ = shifted_weights(scores)
    uniforms = rng.random((n_samples, k))
    subs = _kernels.sample_pl_rankings(weights, k, uniforms)
    offsets = np.arange(n_samples + 1, dtype=np.int64) * k
    values = np.zeros(len(query.items), dtype=np.float64)
    _kernels.plrank3_accumulate(weights, rho_arr, np.tile(theta_arr, n_samples),
                                subs.reshape(-1), offsets, values)
    values /= n_samples
    return GradientVector(query.item_ids, values)


def _log_prob_score_grad(policy: FairPolicy, indices: np.ndarray) -> np.ndarray:
    """Gradient of the fair log-probability w.r.t. every item's score.

    The assignment factor is score-independent; only the group-restricted
    PL factors contribute: +1 at placement, minus exp(score)/Z summed over
    the positions where the item was still available.
    """
    query = policy.query
    grad = np.zeros(len(query.items), dtype=np.float64)
    for j in range(1, query.n_groups + 1):
        pool = query.group_pools[j - 1]
        if len(pool) == 0:
            continue
        local = {int(g): t for t, g in enumerate(pool)}
        placed = [local[int(i)] for i in indices if int(query.group_arr[i]) == j]
        weights, _ = shifted_weights(policy.scores[pool])
        if placed:
            order = np.array(placed, dtype=np.int64)
            z = denominators_indices(weights, order)
            inv_cum = np.cumsum(1.0 / z)
            exposure = np.full(len(pool), inv_cum[-1])
            exposure[order] = inv_cum
            grad_pool = -weights * exposure
            grad_pool[order] += 1.0
        else:
            grad_pool = np.zeros(len(pool))
        grad[pool] += grad_pool
    return grad


def reinforce_gradient(query: QueryInstance, m, c: FairnessConstraints, theta,
                       n_samples: int, rng: np.random.Generator,
                       rho=None) -> GradientVector:
    """Score-function estimator: reward times grad-log-probability.

    Unbiased like the main estimator but with higher variance; kept as a
    cross-check.
    """
    policy = FairPolicy.build(query, m, c)
    rho_arr = _relevance_array(query, rho)
    theta_arr = _theta_array(theta)
    values = np.zeros(len(query.items), dtype=np.float64)
    idx_map = query.id_to_index
    for _ in range(n_samples):
        outcome = sample_fair_ranking(policy, rng)
        indices = np.array([idx_map[d] for d in outcome.ranked_items], dtype=np.int64)
        reward = float(np.dot(theta_arr, rho_arr[indices]))
        values += reward * _log_prob_score_grad(policy, indices)
    values /= n_samples
    return GradientVector(query.item_ids, values)


def enumeration_gradient(query: QueryInstance, m, c: FairnessConstraints, theta,
                         rho=None) -> GradientVector:
    """Exact gradient by summing reward x grad-log-prob over all fair rankings."""
    policy = FairPolicy.build(query, m, c)
    rho_arr = _relevance_array(query, rho)
    theta_arr = _theta_array(theta)
    idx_map = query.id_to_index
    values = np.zeros(len(query.items), dtype=np.float64)
    for outcome in enumerate_fair_rankings(policy):
        lp = fair_ranking_log_prob(outcome, policy)
        if lp is None:
            continue
        indices = np.array([idx_map[d] for d in outcome.ranked_items], dtype=np.int64)
        reward = float(np.dot(theta_arr, rho_arr[indices]))
        values += np.exp(lp) * reward * _log_prob_score_grad(policy, indices)
    return GradientVector(query.item_ids, values)


def finite_difference_oracle(query: QueryInstance, m, c: FairnessConstraints, theta,
                             h: float = 1e-5, rho=None) -> GradientVector:
    """Central differences of the enumerated objective, one bump per item."""
    scores = _scores_array(query, m)
    rho_arr = _relevance_array(query, rho)
    theta_arr = _theta_array(theta)
    values = np.zeros(len(query.items), dtype=np.float64)
    for i in range(len(query.items)):
        bump = np.zeros_like(scores)
        bump[i] = h
        hi = exact_fair_relevance(FairPolicy.build(query, scores + bump, c),
                                  rho_arr, theta_arr)
        lo = exact_fair_relevance(FairPolicy.build(query, scores - bump, c),
                                  rho_arr, theta_arr)
        values[i] = (hi - lo) / (2.0 * h)
    return GradientVector(query.item_ids, values)
