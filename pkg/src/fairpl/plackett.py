"""Plackett-Luce sampling, log-probabilities, and enumeration oracles.

The model places items sequentially, each drawn from the remaining pool with
probability proportional to exp(score). All exponentials are taken after
subtracting the pool maximum (softmax shift invariance), so untrained-model
scores cannot overflow.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import _kernels
from .errors import DuplicateItem, EmptyPool, ItemNotInPool, SlotsExceedPool, TooLarge

ENUM_MAX_POOL = 8
ENUM_MAX_SLOTS = 5

# successive-subtraction guard (see softmax_denominators)
Z_RECOMPUTE_RATIO = 1e-6

# floor on score - max before exponentiation: keeps weights strictly
# positive so no denominator can underflow to exact zero (which would turn
# gradient terms into inf); a 500-log-unit gap is decided beyond any
# practical resolution anyway
SCORE_SPREAD_CAP = 500.0


@dataclass(frozen=True)
class ScoreVector:
    """Log scores keyed by item id."""

    scores: Mapping[str, float]

    def __getitem__(self, item_id: str) -> float:
        return self.scores[item_id]

    def array_for(self, pool: Sequence[str]) -> np.ndarray:
        try:
            return np.array([self.scores[d] for d in pool], dtype=np.float64)
        except KeyError as exc:
            raise ItemNotInPool(f"no score for item {exc.args[0]!r}") from None


def _as_pool_list(pool: Iterable[str]) -> list:
    pool_list = sorted(pool) if isinstance(pool, (set, frozenset)) else list(pool)
    if len(set(pool_list)) != len(pool_list):
        raise DuplicateItem("pool contains duplicate ids")
    return pool_list


def _scores_of(m, pool: Sequence[str]) -> np.ndarray:
    if isinstance(m, ScoreVector):
        return m.array_for(pool)
    return ScoreVector(m).array_for(pool)


def shifted_weights(scores: np.ndarray) -> tuple:
    """(exp(scores - max), max); the max item always has weight 1.

    Shifted scores are floored at -SCORE_SPREAD_CAP so weights never
    underflow to exact zero.
    """
    shift = float(np.max(scores))
    return np.exp(np.maximum(scores - shift, -SCORE_SPREAD_CAP)), shift


def sample_rankings_from_scores(scores: np.ndarray, slots: int, n_samples: int,
                                rng: np.random.Generator) -> np.ndarray:
    """(n_samples, slots) index array of sequential PL draws."""
    n = scores.shape[0]
    if n == 0:
        raise EmptyPool("cannot sample from an empty pool")
    if slots > n:
        raise SlotsExceedPool(f"slots {slots} > pool size {n}")
    weights, _ = shifted_weights(scores)
    uniforms = rng.random((n_samples, slots))
    return _kernels.sample_pl_rankings(weights, slots, uniforms)


def log_prob_indices(scores: np.ndarray, order: np.ndarray) -> float:
    """Log PL probability of placing `order` (indices) from the full pool."""
    if len(order) == 0:
        return 0.0
    weights, shift = shifted_weights(scores)
    z = denominators_indices(weights, order)
    # log of the same floored weights the sampler uses, so probabilities
    # match sampling frequencies exactly even in the capped regime
    return float(np.sum(np.log(weights[order]) - np.log(z)))


def denominators_indices(weights: np.ndarray, order: np.ndarray) -> np.ndarray:
    """Z_i = sum of remaining-pool weights before placement i.

    One full sum plus successive subtraction; recomputed from scratch if the
    running value decays below Z_RECOMPUTE_RATIO of the initial sum
    (catastrophic-cancellation guard).
    """
    total = float(np.sum(weights))
    floor = Z_RECOMPUTE_RATIO * total
    z = np.empty(len(order), dtype=np.float64)
    acc = total
    for t, idx in enumerate(order):
        if acc < floor:
            # sum the remaining pool directly; subtracting the placed
            # weights from the total would cancel all over again
            mask = np.ones(weights.shape[0], dtype=bool)
            mask[order[:t]] = False
            acc = float(np.sum(weights[mask]))
        z[t] = acc
        acc -= weights[idx]
    return z


def pl_sample(pool: Iterable[str], slots: int, m, rng: np.random.Generator) -> list:
    """Sample an ordered length-`slots` selection from the pool."""
    pool_list = _as_pool_list(pool)
    scores = _scores_of(m, pool_list)
    idx = sample_rankings_from_scores(scores, slots, 1, rng)[0]
    return [pool_list[i] for i in idx]


def pl_log_prob(sigma: Sequence[str], pool: Iterable[str], m) -> float:
    """Log probability of the ordered selection `sigma` under the PL model."""
    pool_list = _as_pool_list(pool)
    index = {d: i for i, d in enumerate(pool_list)}
    if len(set(sigma)) != len(sigma):
        raise DuplicateItem(f"duplicate item in ranking {sigma!r}")
    try:
        order = np.array([index[d] for d in sigma], dtype=np.int64)
    except KeyError as exc:
        raise ItemNotInPool(f"item {exc.args[0]!r} not in pool") from None
    scores = _scores_of(m, pool_list)
    return log_prob_indices(scores, order)


def enumerate_rankings(pool: Iterable[str], slots: int) -> list:
    """All ordered `slots`-selections of the pool, lexicographic by item id."""
    pool_list = sorted(_as_pool_list(pool))
    if len(pool_list) > ENUM_MAX_POOL or slots > ENUM_MAX_SLOTS:
        raise TooLarge(
            f"enumeration guard: pool {len(pool_list)} > {ENUM_MAX_POOL} "
            f"or slots {slots} > {ENUM_MAX_SLOTS}")
    if slots > len(pool_list):
        raise SlotsExceedPool(f"slots {slots} > pool size {len(pool_list)}")
    return [list(p) for p in itertools.permutations(pool_list, slots)]


def softmax_denominators(sigma: Sequence[str], pool: Iterable[str], m) -> np.ndarray:
    """Shifted denominators Z_1..Z_len(sigma) along the placement of sigma.

    Values are sums of exp(score - pool max); multiply by exp(pool max) to
    recover the unshifted sums.
    """
    pool_list = _as_pool_list(pool)
    index = {d: i for i, d in enumerate(pool_list)}
    if len(set(sigma)) != len(sigma):
        raise DuplicateItem(f"duplicate item in ranking {sigma!r}")
    try:
        order = np.array([index[d] for d in sigma], dtype=np.int64)
    except KeyError as exc:
        raise ItemNotInPool(f"item {exc.args[0]!r} not in pool") from None
    scores = _scores_of(m, pool_list)
    weights, _ = shifted_weights(scores)
    return denominators_indices(weights, order)
