"""Ranking-quality and fairness measurement.

Samplers are callables rng -> RankingOutcome. NDCG normalizes by the ideal
DCG over the full candidate pool, so a constrained policy can score below 1
even when it ranks optimally within its constraints.
"""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .core import FairnessConstraints, PositionDiscounts, RankingOutcome, check_ex_post_fair
from .errors import LengthMismatch


def _theta_array(theta) -> np.ndarray:
    if isinstance(theta, PositionDiscounts):
        return theta.as_array
    return np.asarray(theta, dtype=np.float64)


def dcg_of_values(values: np.ndarray, theta: np.ndarray) -> float:
    return float(np.dot(theta[:len(values)], values))


def ideal_dcg(pool_values: np.ndarray, theta: np.ndarray) -> float:
    top = np.sort(pool_values)[::-1][:len(theta)]
    return dcg_of_values(top, theta)


def ndcg_of_ranking(sigma: RankingOutcome, rho: Mapping, theta) -> float:
    """DCG of sigma over DCG of the pool's ideal ordering; 1.0 if ideal is 0."""
    theta_arr = _theta_array(theta)
    if len(sigma.ranked_items) != len(theta_arr):
        raise LengthMismatch(
            f"ranking length {len(sigma.ranked_items)} != {len(theta_arr)} discounts")
    placed = np.array([rho[d] for d in sigma.ranked_items], dtype=np.float64)
    pool = np.fromiter(rho.values(), dtype=np.float64, count=len(rho))
    ideal = ideal_dcg(pool, theta_arr)
    if ideal == 0.0:
        return 1.0
    return dcg_of_values(placed, theta_arr) / ideal


def _rho_lookup(rho, query):
    if isinstance(rho, Mapping):
        return dict(rho)
    if query is None:
        raise ValueError("array rho requires the query for id lookup")
    arr = np.asarray(rho, dtype=np.float64)
    return {d: float(v) for d, v in zip(query.item_ids, arr)}


def expected_ndcg(sampler: Callable, rho, theta, query=None,
                  n_samples: int = 1000, rng=None):
    """Monte-Carlo mean NDCG with standard error (None when n_samples=1)."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rho_map = _rho_lookup(rho, query)
    theta_arr = _theta_array(theta)
    pool = np.fromiter(rho_map.values(), dtype=np.float64, count=len(rho_map))
    ideal = ideal_dcg(pool, theta_arr)
    vals = np.empty(n_samples)
    for s in range(n_samples):
        sigma = sampler(rng)
        placed = np.array([rho_map[d] for d in sigma.ranked_items], dtype=np.float64)
        if len(placed) != len(theta_arr):
            raise LengthMismatch("sampler ranking length != discounts length")
        dcg = dcg_of_values(placed, theta_arr)
        vals[s] = 1.0 if ideal == 0.0 else dcg / ideal
    mean = float(np.mean(vals))
    stderr = float(np.std(vals, ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else None
    return mean, stderr


def per_rank_group_fraction(sampler: Callable, group: int, n_samples: int,
                            rng=None) -> np.ndarray:
    """Entry i: fraction of sampled rankings whose rank-i item is from `group`."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    counts = None
    for _ in range(n_samples):
        sigma = sampler(rng)
        hits = np.array([1.0 if g == group else 0.0 for g in sigma.assignment.slots])
        counts = hits if counts is None else counts + hits
    return counts / n_samples


def fairness_violation_rate(sampler: Callable, c: FairnessConstraints,
                            n_samples: int, rng=None) -> float:
    """Fraction of sampled rankings that break the representation bounds."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    bad = 0
    for _ in range(n_samples):
        if not check_ex_post_fair(sampler(rng), c):
            bad += 1
    return bad / n_samples
