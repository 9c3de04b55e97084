import math

import numpy as np
import pytest

import hypothesis.strategies as st
from hypothesis import given, settings

from fairpl.core import FairnessConstraints, PositionDiscounts
from fairpl.gradients import (algorithm1_gradient, enumeration_gradient,
                              finite_difference_oracle, plain_plrank3_gradient,
                              plrank3_group_gradient, plrank3_stats,
                              reinforce_gradient)
from fairpl.rng import derive_rng

from conftest import make_query


def rel_err(est, truth, eps=1e-9):
    return np.abs(est - truth) / np.maximum(np.abs(truth), eps)


@pytest.fixture(scope="module")
def small_instance():
    q = make_query([1, 1, 1, 2, 2], [0.9, 0.3, 0.5, 0.8, 0.1])
    c = FairnessConstraints(k=3, lower=(1, 1), upper=(2, 2))
    theta = PositionDiscounts.ndcg(3)
    scores = np.array([0.4, -0.2, 0.1, 0.7, -0.5])
    return q, c, theta, scores


class TestOracles:
    def test_fd_matches_enumeration(self, small_instance):
        q, c, theta, scores = small_instance
        fd = finite_difference_oracle(q, scores, c, theta)
        en = enumeration_gradient(q, scores, c, theta)
        np.testing.assert_allclose(fd.values, en.values, atol=1e-6)

    def test_constant_relevance_zero_gradient(self):
        q = make_query([1, 1, 2, 2], [0.6, 0.6, 0.6, 0.6])
        c = FairnessConstraints(k=2, lower=(1, 1), upper=(1, 1))
        theta = PositionDiscounts.ndcg(2)
        fd = finite_difference_oracle(q, np.array([0.5, -0.2, 0.1, 0.9]), c, theta)
        np.testing.assert_allclose(fd.values, 0.0, atol=1e-8)

    def test_symmetric_instance_equal_coordinates(self):
        q = make_query([1, 1, 1], [0.5, 0.5, 0.5])
        # non-constant theta, equal scores and relevance: symmetry across items
        q = make_query([1, 1, 1], [0.8, 0.8, 0.8])
        c = FairnessConstraints(k=2, lower=(0,), upper=(3,))
        fd = finite_difference_oracle(q, np.zeros(3), c, PositionDiscounts((1.0, 0.4)))
        assert np.allclose(fd.values, fd.values[0], atol=1e-8)


class TestPerSampleStats:
    @given(st.data())
    @settings(max_examples=100, deadline=None)
    def test_future_reward_non_increasing_and_shapes(self, data):
        n = data.draw(st.integers(2, 7))
        kk = data.draw(st.integers(1, n))
        pool = [f"i{t}" for t in range(n)]
        rng = np.random.default_rng(data.draw(st.integers(0, 10_000)))
        m = {d: float(s) for d, s in zip(pool, rng.normal(size=n))}
        rho = {d: float(r) for d, r in zip(pool, rng.uniform(size=n))}
        theta = PositionDiscounts.ndcg(kk + data.draw(st.integers(0, 3)))
        ranks = sorted(rng.permutation(theta.k)[:kk].tolist())
        sigma = [pool[i] for i in rng.permutation(n)[:kk]]
        stats = plrank3_stats(sigma, ranks, pool, m, rho, theta)
        for arr in (stats.placed_reward, stats.future_reward, stats.denominators,
                    stats.discount_ratio_cum, stats.reward_ratio_cum):
            assert arr.shape == (kk,)
        assert np.all(np.diff(stats.future_reward) <= 1e-15)
        assert np.all(stats.denominators > 0)

    def test_stats_reconstruct_group_gradient(self):
        # the contribution map is exactly determined by the per-sample stats
        pool = ["a", "b", "c", "d"]
        m = {"a": 0.4, "b": -0.1, "c": 0.0, "d": 0.7}
        rho = {"a": 0.9, "b": 0.2, "c": 0.5, "d": 0.0}
        theta = PositionDiscounts.ndcg(3)
        sigma, ranks = ["c", "a"], [0, 2]
        stats = plrank3_stats(sigma, ranks, pool, m, rho, theta)
        contrib = plrank3_group_gradient(sigma, ranks, pool, m, rho, theta)
        shift = max(m.values())
        dr_end = stats.discount_ratio_cum[-1]
        ri_end = stats.reward_ratio_cum[-1]
        for d in pool:
            w = np.exp(m[d] - shift)
            if d in sigma:
                t = sigma.index(d)
                expect = stats.future_reward[t] + w * (
                    rho[d] * stats.discount_ratio_cum[t] - stats.reward_ratio_cum[t])
            else:
                expect = w * (rho[d] * dr_end - ri_end)
            assert contrib[d] == pytest.approx(expect, rel=1e-12)


class TestGroupGradient:
    def test_zero_relevance_zero_contribution(self):
        contrib = plrank3_group_gradient(
            ["a", "c"], [0, 2], ["a", "b", "c"],
            {"a": 0.1, "b": -0.2, "c": 0.4},
            {"a": 0.0, "b": 0.0, "c": 0.0},
            PositionDiscounts.ndcg(3))
        assert all(v == 0.0 for v in contrib.values())

    def test_symmetric_items_equal_expectation(self):
        # equal scores/relevance: averaged single-sample contributions agree
        pool = ["a", "b", "c"]
        m = {d: 0.0 for d in pool}
        rho = {d: 0.5 for d in pool}
        theta = PositionDiscounts((1.0, 0.5))
        q = make_query([1, 1, 1], [0.5, 0.5, 0.5])
        c = FairnessConstraints(k=2, lower=(0,), upper=(3,))
        rng = derive_rng(0, "sym")
        n = 50000
        total = np.zeros(3)
        for _ in range(n):
            g = algorithm1_gradient(q, np.zeros(3), c, theta, 1, rng)
            total += g.values
        mean = total / n
        spread = np.abs(mean - mean.mean()).max()
        assert spread < 4 * 1.0 / math.sqrt(n)

    def test_three_item_group_against_oracle(self):
        # the canonical single-group instance: 3 items, 2 slots
        q = make_query([1, 1, 1], [1.0, 0.0, 0.0])
        c = FairnessConstraints(k=2, lower=(0,), upper=(3,))
        theta = PositionDiscounts((1.0, 0.5))
        scores = np.zeros(3)
        fd = finite_difference_oracle(q, scores, c, theta)
        rng = derive_rng(1, "orc")
        est = algorithm1_gradient(q, scores, c, theta, 50000, rng)
        assert np.all(rel_err(est.values, fd.values, eps=1e-3) < 0.02)


class TestAlgorithm1:
    def test_converges_to_oracle(self, small_instance):
        q, c, theta, scores = small_instance
        fd = finite_difference_oracle(q, scores, c, theta)
        est = algorithm1_gradient(q, scores, c, theta, 200000, derive_rng(2, "a1"))
        assert np.all(rel_err(est.values, fd.values) < 0.02)

    def test_deterministic_given_seed(self, small_instance):
        q, c, theta, scores = small_instance
        a = algorithm1_gradient(q, scores, c, theta, 50, derive_rng(3, "det"))
        b = algorithm1_gradient(q, scores, c, theta, 50, derive_rng(3, "det"))
        np.testing.assert_array_equal(a.values, b.values)

    def test_reduction_matches_plain_plrank3(self):
        # single group + vacuous constraints: same estimator distribution
        q = make_query([1, 1, 1, 1], [0.9, 0.1, 0.6, 0.3])
        c = FairnessConstraints(k=2, lower=(0,), upper=(4,))
        theta = PositionDiscounts.ndcg(2)
        scores = np.array([0.2, -0.4, 0.5, 0.0])
        n = 10000
        fair_runs = np.stack([
            algorithm1_gradient(q, scores, c, theta, 1, derive_rng(4, "f", i)).values
            for i in range(n)])
        plain_runs = np.stack([
            plain_plrank3_gradient(q, scores, theta, 1, derive_rng(5, "p", i)).values
            for i in range(n)])
        # per-coordinate two-sample t statistics stay small
        for d in range(4):
            a, b = fair_runs[:, d], plain_runs[:, d]
            se = math.sqrt(a.var(ddof=1) / n + b.var(ddof=1) / n)
            t = (a.mean() - b.mean()) / se
            assert abs(t) < 4.0

    def test_identical_items_get_equal_expected_gradients(self):
        q = make_query([1, 1, 2, 2], [0.4, 0.4, 0.7, 0.7])
        c = FairnessConstraints(k=2, lower=(1, 1), upper=(1, 1))
        theta = PositionDiscounts.ndcg(2)
        fd = finite_difference_oracle(q, np.zeros(4), c, theta)
        assert fd.values[0] == pytest.approx(fd.values[1], abs=1e-8)
        assert fd.values[2] == pytest.approx(fd.values[3], abs=1e-8)


class TestReinforce:
    def test_constant_relevance_mean_near_zero(self):
        q = make_query([1, 1, 2, 2], [0.5, 0.5, 0.5, 0.5])
        c = FairnessConstraints(k=2, lower=(1, 1), upper=(1, 1))
        theta = PositionDiscounts.ndcg(2)
        scores = np.array([0.3, -0.3, 0.2, 0.0])
        n = 20000
        runs = np.stack([
            reinforce_gradient(q, scores, c, theta, 1, derive_rng(6, "r", i)).values
            for i in range(n)])
        mean = runs.mean(axis=0)
        se = runs.std(axis=0, ddof=1) / math.sqrt(n)
        assert np.all(np.abs(mean) < 3 * np.maximum(se, 1e-12))

    def test_agrees_with_oracle(self, small_instance):
        q, c, theta, scores = small_instance
        fd = finite_difference_oracle(q, scores, c, theta)
        est = reinforce_gradient(q, scores, c, theta, 50000, derive_rng(7, "ro"))
        # higher variance estimator: compare within 4 standard errors instead
        # of a fixed relative band
        runs = np.stack([
            reinforce_gradient(q, scores, c, theta, 1, derive_rng(8, "rv", i)).values
            for i in range(4000)])
        se_per_sample = runs.std(axis=0, ddof=1)
        se = se_per_sample / math.sqrt(50000)
        assert np.all(np.abs(est.values - fd.values) < 4 * se)

    def test_variance_strictly_larger_than_algorithm1(self, small_instance):
        q, c, theta, scores = small_instance
        n = 4000
        rein = np.stack([
            reinforce_gradient(q, scores, c, theta, 1, derive_rng(9, "v1", i)).values
            for i in range(n)])
        alg1 = np.stack([
            algorithm1_gradient(q, scores, c, theta, 1, derive_rng(10, "v2", i)).values
            for i in range(n)])
        assert np.all(rein.var(axis=0) > alg1.var(axis=0))
