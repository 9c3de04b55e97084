import math

import numpy as np
import pytest

from fairpl.core import FairnessConstraints, PositionDiscounts
from fairpl.errors import LengthMismatch
from fairpl.metrics import (expected_ndcg, fairness_violation_rate, ndcg_of_ranking,
                            per_rank_group_fraction)
from fairpl.plackett import enumerate_rankings, pl_log_prob
from fairpl.policy import (FairPolicy, exact_fair_relevance, fair_policy_sampler,
                           outcome_from_indices, plain_policy_sampler)
from fairpl.rng import derive_rng

from conftest import make_query


class TestNdcg:
    def test_ideal_ranking(self):
        q = make_query([1, 1], [1.0, 0.0])
        sigma = outcome_from_indices(q, [0, 1])
        rho = {it.item_id: it.relevance_true for it in q.items}
        assert ndcg_of_ranking(sigma, rho, PositionDiscounts.ndcg(2)) == 1.0

    def test_reversed_ranking(self):
        q = make_query([1, 1], [1.0, 0.0])
        sigma = outcome_from_indices(q, [1, 0])
        rho = {it.item_id: it.relevance_true for it in q.items}
        val = ndcg_of_ranking(sigma, rho, PositionDiscounts((1.0, 1.0 / math.log2(3))))
        assert val == pytest.approx(1.0 / math.log2(3))

    def test_all_zero_relevance_convention(self):
        q = make_query([1, 1], [0.0, 0.0])
        sigma = outcome_from_indices(q, [0, 1])
        rho = {it.item_id: 0.0 for it in q.items}
        assert ndcg_of_ranking(sigma, rho, PositionDiscounts.ndcg(2)) == 1.0

    def test_length_mismatch(self):
        q = make_query([1, 1], [1.0, 0.0])
        sigma = outcome_from_indices(q, [0])
        rho = {it.item_id: it.relevance_true for it in q.items}
        with pytest.raises(LengthMismatch):
            ndcg_of_ranking(sigma, rho, PositionDiscounts.ndcg(2))

    def test_bounded_when_nonnegative(self):
        rng = np.random.default_rng(0)
        theta = PositionDiscounts.ndcg(3)
        for seed in range(20):
            q = make_query([1, 1, 2, 2, 2], seed=seed)
            rho = {it.item_id: it.relevance_true for it in q.items}
            perm = rng.permutation(5)[:3]
            val = ndcg_of_ranking(outcome_from_indices(q, perm), rho, theta)
            assert 0.0 <= val <= 1.0


class TestExpectedNdcg:
    def test_deterministic_policy_zero_variance(self):
        q = make_query([1, 2], [0.8, 0.3])
        fixed = outcome_from_indices(q, [0, 1])
        mean, stderr = expected_ndcg(lambda rng: fixed, q.relevance_true_arr,
                                     PositionDiscounts.ndcg(2), q, 500,
                                     derive_rng(0))
        rho = {it.item_id: it.relevance_true for it in q.items}
        assert mean == pytest.approx(ndcg_of_ranking(fixed, rho, PositionDiscounts.ndcg(2)))
        assert stderr == 0.0

    def test_single_sample_no_stderr(self):
        q = make_query([1, 2], [0.8, 0.3])
        fixed = outcome_from_indices(q, [0, 1])
        mean, stderr = expected_ndcg(lambda rng: fixed, q.relevance_true_arr,
                                     PositionDiscounts.ndcg(2), q, 1, derive_rng(0))
        assert stderr is None

    def test_monte_carlo_matches_enumeration(self):
        q = make_query([1, 1, 2, 2], [0.9, 0.2, 0.6, 0.4])
        c = FairnessConstraints(k=2, lower=(1, 1), upper=(1, 1))
        theta = PositionDiscounts.ndcg(2)
        scores = np.array([0.4, -0.1, 0.3, 0.7])
        policy = FairPolicy.build(q, scores, c)
        exact = exact_fair_relevance(policy, None, theta)
        rho_pool = q.relevance_true_arr
        ideal = np.dot(np.sort(rho_pool)[::-1][:2], theta.as_array)
        mean, stderr = expected_ndcg(fair_policy_sampler(policy),
                                     q.relevance_true_arr, theta, q, 40000,
                                     derive_rng(1, "mc"))
        assert abs(mean - exact / ideal) < 3 * stderr


class TestPerRankFraction:
    def test_single_group_all_ones(self):
        q = make_query([1, 1, 1], seed=0)
        sampler = plain_policy_sampler(q, np.zeros(3), 2)
        frac = per_rank_group_fraction(sampler, 1, 200, derive_rng(2))
        np.testing.assert_array_equal(frac, 1.0)

    def test_symmetric_equality_constraints_half(self):
        q = make_query([1, 1, 2, 2], seed=1)
        c = FairnessConstraints(k=2, lower=(1, 1), upper=(1, 1))
        policy = FairPolicy.build(q, np.zeros(4), c)
        n = 40000
        frac = per_rank_group_fraction(fair_policy_sampler(policy), 2, n,
                                       derive_rng(3, "half"))
        se = math.sqrt(0.25 / n)
        assert np.all(np.abs(frac - 0.5) < 3 * se)

    def test_fair_policy_within_marginal_band(self):
        q = make_query([1] * 5 + [2] * 3, seed=2)
        c = FairnessConstraints(k=4, lower=(1, 1), upper=(3, 3))
        policy = FairPolicy.build(q, derive_rng(4).normal(size=8), c)
        n = 50000
        eps = 4 * math.sqrt(0.25 / n)
        for j in (1, 2):
            frac = per_rank_group_fraction(fair_policy_sampler(policy), j, n,
                                           derive_rng(5, "band", j))
            assert np.all(frac >= c.lower[j - 1] / c.k - eps)
            assert np.all(frac <= c.upper[j - 1] / c.k + eps)

    def test_fractions_sum_to_one_across_groups(self):
        q = make_query([1, 1, 2, 3], seed=3)
        c = FairnessConstraints(k=3, lower=(1, 0, 0), upper=(2, 2, 2))
        policy = FairPolicy.build(q, derive_rng(6).normal(size=4), c)
        total = np.zeros(3)
        for j in (1, 2, 3):
            total += per_rank_group_fraction(fair_policy_sampler(policy), j, 3000,
                                             derive_rng(7, "sum", j))
        # independent sampling runs per group: equality within MC noise
        assert np.all(np.abs(total - 1.0) < 0.06)

    def test_fractions_sum_exactly_for_shared_draws(self):
        q = make_query([1, 1, 2], seed=4)
        draws = [outcome_from_indices(q, [0, 2]), outcome_from_indices(q, [2, 1])]
        state = {"i": 0}

        def sampler(rng):
            out = draws[state["i"] % 2]
            state["i"] += 1
            return out

        f1 = per_rank_group_fraction(sampler, 1, 10, None)
        state["i"] = 0
        f2 = per_rank_group_fraction(sampler, 2, 10, None)
        np.testing.assert_allclose(f1 + f2, 1.0)


class TestViolationRate:
    def test_fair_policy_exact_zero(self):
        q = make_query([1, 1, 2, 2], seed=5)
        c = FairnessConstraints(k=2, lower=(1, 1), upper=(1, 1))
        policy = FairPolicy.build(q, derive_rng(8).normal(size=4), c)
        rate = fairness_violation_rate(fair_policy_sampler(policy), policy.constraints,
                                       5000, derive_rng(9, "v"))
        assert rate == 0.0

    def test_plain_policy_matches_enumerated_unfair_mass(self):
        q = make_query([1, 1, 2, 2], seed=6)
        c = FairnessConstraints(k=2, lower=(1, 1), upper=(1, 1))
        scores = np.array([0.2, -0.1, 0.4, 0.0])
        m = dict(zip(q.item_ids, scores))
        unfair_mass = sum(
            math.exp(pl_log_prob(s, list(q.item_ids), m))
            for s in enumerate_rankings(q.item_ids, 2)
            if len({q.items[q.id_to_index[d]].group for d in s}) != 2)
        n = 40000
        rate = fairness_violation_rate(plain_policy_sampler(q, scores, 2), c, n,
                                       derive_rng(10, "pv"))
        se = math.sqrt(unfair_mass * (1 - unfair_mass) / n)
        assert rate > 0
        assert abs(rate - unfair_mass) < 3 * se

    def test_vacuous_constraints_zero(self):
        q = make_query([1, 1, 2, 2], seed=7)
        c = FairnessConstraints(k=2, lower=(0, 0), upper=(2, 2))
        rate = fairness_violation_rate(
            plain_policy_sampler(q, derive_rng(11).normal(size=4), 2), c, 2000,
            derive_rng(12, "vac"))
        assert rate == 0.0
