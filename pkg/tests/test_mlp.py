import numpy as np
import pytest

from fairpl.core import FairnessConstraints, PositionDiscounts, per_query_constraints
from fairpl.data import synth_generate
from fairpl.errors import DimMismatch, IncompatibleCheckpoint, NonFiniteLoss
from fairpl.mlp import (MlpParams, TrainConfig, backward_chain, forward_scores,
                        load_checkpoint, save_checkpoint, train, zeros_like_params)
from fairpl.policy import FairPolicy, exact_fair_relevance
from fairpl.rng import derive_rng

from conftest import make_query


def params_fields(p):
    return (p.w1, p.b1, p.w2, p.b2, p.w3, np.array([p.b3]))


class TestForward:
    def test_zero_weights_constant_scores(self):
        q = make_query([1, 1, 2], feature_dim=4, seed=0)
        p = MlpParams.init(4, derive_rng(0, "init"))
        zero = zeros_like_params(p)
        zero = MlpParams(zero.w1, zero.b1, zero.w2, zero.b2, zero.w3, 1.7)
        np.testing.assert_allclose(forward_scores(zero, q), 1.7)

    def test_identical_features_identical_scores(self):
        feats = (0.3, -0.2, 0.5)
        from fairpl.core import Item, QueryInstance
        items = tuple(Item(f"d{i}", feats, 0.5, 0.5, 1) for i in range(3))
        q = QueryInstance("q", items, 1)
        p = MlpParams.init(3, derive_rng(1, "init"))
        s = forward_scores(p, q)
        # BLAS may round rows differently by block; scores agree to ~1 ulp
        np.testing.assert_allclose(s, s[0], rtol=1e-12)

    def test_head_linearity(self):
        q = make_query([1, 1, 2], feature_dim=4, seed=2)
        p = MlpParams.init(4, derive_rng(2, "init"))
        doubled = MlpParams(p.w1, p.b1, p.w2, p.b2, 2.0 * p.w3, p.b3)
        s1 = forward_scores(p, q)
        s2 = forward_scores(doubled, q)
        np.testing.assert_allclose(s2 - p.b3, 2.0 * (s1 - p.b3), rtol=1e-12)

    def test_dim_mismatch(self):
        q = make_query([1, 1], feature_dim=3, seed=0)
        p = MlpParams.init(4, derive_rng(0, "init"))
        with pytest.raises(DimMismatch):
            forward_scores(p, q)


class TestBackward:
    def test_zero_upstream(self):
        q = make_query([1, 1, 2], feature_dim=4, seed=3)
        p = MlpParams.init(4, derive_rng(3, "init"))
        g = backward_chain(p, q, np.zeros(3))
        for f in params_fields(g):
            np.testing.assert_array_equal(f, 0.0)

    def test_opposite_upstream_identical_features_cancels_head(self):
        from fairpl.core import Item, QueryInstance
        feats = (0.4, -0.1)
        items = (Item("a", feats, 0.5, 0.5, 1), Item("b", feats, 0.5, 0.5, 1))
        q = QueryInstance("q", items, 1)
        p = MlpParams.init(2, derive_rng(4, "init"))
        g = backward_chain(p, q, np.array([1.0, -1.0]))
        np.testing.assert_allclose(g.w3, 0.0, atol=1e-12)
        assert g.b3 == 0.0

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_finite_differences(self, seed):
        # objective sum_d u_d * m(d); central differences over every parameter
        q = make_query([1, 1, 2, 2], feature_dim=3, seed=seed)
        p = MlpParams.init(3, derive_rng(seed, "fd-init"))
        u = derive_rng(seed, "fd-up").normal(size=4)
        g = backward_chain(p, q, u)

        def objective(params):
            return float(np.dot(u, forward_scores(params, q)))

        h = 1e-4
        rng = derive_rng(seed, "fd-pick")
        for field in ("w1", "b1", "w2", "b2", "w3"):
            arr = getattr(p, field)
            flat = arr.reshape(-1)
            for idx in rng.choice(flat.size, size=min(6, flat.size), replace=False):
                bump = np.zeros_like(flat)
                bump[idx] = h
                p_hi = MlpParams(**{f: (getattr(p, f) + bump.reshape(arr.shape)
                                        if f == field else getattr(p, f))
                                    for f in ("w1", "b1", "w2", "b2", "w3")},
                                 b3=p.b3)
                p_lo = MlpParams(**{f: (getattr(p, f) - bump.reshape(arr.shape)
                                        if f == field else getattr(p, f))
                                    for f in ("w1", "b1", "w2", "b2", "w3")},
                                 b3=p.b3)
                fd = (objective(p_hi) - objective(p_lo)) / (2 * h)
                an = getattr(g, field).reshape(-1)[idx]
                assert fd == pytest.approx(an, rel=1e-4, abs=1e-7)
        fd_b3 = (objective(MlpParams(p.w1, p.b1, p.w2, p.b2, p.w3, p.b3 + h))
                 - objective(MlpParams(p.w1, p.b1, p.w2, p.b2, p.w3, p.b3 - h))) / (2 * h)
        assert fd_b3 == pytest.approx(g.b3, rel=1e-4, abs=1e-7)


class TestTrain:
    def _dataset(self):
        return synth_generate(12, 8, 2, (0.5, 0.5), feature_dim=5, seed=11)

    def _cfg(self, **kw):
        base = dict(epochs=2, mode="plain_pl", learning_rate=0.01, batch_size=32,
                    n_gradient_samples=5, seed=3, eval_samples=20)
        base.update(kw)
        return TrainConfig(**base)

    def test_deterministic_log(self):
        d = self._dataset()
        theta = PositionDiscounts.ndcg(3)
        cons = per_query_constraints(d.queries, 0.1, 3)
        r1 = train(d, self._cfg(), cons, theta)
        r2 = train(d, self._cfg(), cons, theta)
        assert r1.log == r2.log
        for a, b in zip(params_fields(r1.params), params_fields(r2.params)):
            np.testing.assert_array_equal(a, b)

    def test_group_fair_requires_constraints(self):
        d = self._dataset()
        with pytest.raises(ValueError):
            train(d, self._cfg(mode="group_fair"), None, PositionDiscounts.ndcg(3))

    def test_group_fair_logs_zero_violation(self):
        d = self._dataset()
        theta = PositionDiscounts.ndcg(3)
        cons = per_query_constraints(d.queries, 0.1, 3)
        r = train(d, self._cfg(mode="group_fair"), cons, theta)
        assert all(row["fairness_violation_rate"] == 0.0 for row in r.log)

    @pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
    @pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
    def test_non_finite_loss_aborts(self):
        d = self._dataset()
        theta = PositionDiscounts.ndcg(3)
        cons = per_query_constraints(d.queries, 0.1, 3)
        with pytest.raises(NonFiniteLoss):
            train(d, self._cfg(learning_rate=1e308, epochs=3), cons, theta)

    def test_ascent_direction_on_enumerable_instance(self):
        # one SGD step on a tiny fair instance increases the exact objective
        from fairpl.data import DatasetManifest
        q = make_query([1, 1, 2, 2], [0.9, 0.2, 0.7, 0.1], feature_dim=3, seed=5)
        d = DatasetManifest(name="tiny", queries=(q,), max_label=1,
                            group_names=("g1", "g2"), minority_group=2)
        c = FairnessConstraints(k=2, lower=(1, 1), upper=(1, 1))
        theta = PositionDiscounts.ndcg(2)
        cfg = self._cfg(mode="group_fair", epochs=1, learning_rate=1e-3,
                        n_gradient_samples=2000, val_fraction=0.0)
        before_params = MlpParams.init(3, derive_rng(cfg.seed, "init"))
        before = exact_fair_relevance(
            FairPolicy.build(q, forward_scores(before_params, q), c), None, theta)
        result = train(d, cfg, {q.query_id: c}, theta)
        after = exact_fair_relevance(
            FairPolicy.build(q, forward_scores(result.params, q), c), None, theta)
        assert after > before


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        p = MlpParams.init(6, derive_rng(0, "ck"))
        path = tmp_path / "model.json"
        save_checkpoint(p, path, meta={"mode": "group_fair", "k": 5})
        loaded, meta = load_checkpoint(path)
        for a, b in zip(params_fields(p), params_fields(loaded)):
            np.testing.assert_array_equal(a, b)
        assert meta == {"mode": "group_fair", "k": 5}

    def test_incompatible(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"format": "other", "version": 9}')
        with pytest.raises(IncompatibleCheckpoint):
            load_checkpoint(path)
