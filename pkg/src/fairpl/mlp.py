"""Score model (two hidden ReLU layers of 32 units) and the SGD training loop.

Training ascends the sampled gradient of the expected-relevance objective:
per-item score gradients from the chosen estimator are chained through the
network by standard backpropagation. Plain SGD, no momentum or decay.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import PositionDiscounts, QueryInstance, validate_constraints
from .data import DatasetManifest, split_train_test
from .errors import DimMismatch, IncompatibleCheckpoint, NonFiniteLoss
from .gradients import algorithm1_gradient, plain_plrank3_gradient
from .metrics import expected_ndcg, fairness_violation_rate
from .policy import FairPolicy, fair_policy_sampler, plain_policy_sampler
from .rng import derive_rng

HIDDEN_UNITS = 32


@dataclass(frozen=True)
class MlpParams:
    """Weights of the two-hidden-layer scorer (also reused for gradients)."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: float

    @staticmethod
    def init(feature_dim: int, rng: np.random.Generator,
             hidden: int = HIDDEN_UNITS) -> "MlpParams":
        """He-style uniform init scaled by fan-in; biases zero."""
        def u(fan_in, *shape):
            limit = np.sqrt(6.0 / fan_in)
            return rng.uniform(-limit, limit, size=shape)
        return MlpParams(
            w1=u(feature_dim, feature_dim, hidden),
            b1=np.zeros(hidden),
            w2=u(hidden, hidden, hidden),
            b2=np.zeros(hidden),
            w3=u(hidden, hidden),
            b3=0.0,
        )

    @property
    def feature_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    def scaled_add(self, other: "MlpParams", scale: float) -> "MlpParams":
        return MlpParams(
            w1=self.w1 + scale * other.w1,
            b1=self.b1 + scale * other.b1,
            w2=self.w2 + scale * other.w2,
            b2=self.b2 + scale * other.b2,
            w3=self.w3 + scale * other.w3,
            b3=self.b3 + scale * other.b3,
        )

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in
                   (self.w1, self.b1, self.w2, self.b2, self.w3, np.array(self.b3)))


def zeros_like_params(p: MlpParams) -> MlpParams:
    return MlpParams(np.zeros_like(p.w1), np.zeros_like(p.b1),
                     np.zeros_like(p.w2), np.zeros_like(p.b2),
                     np.zeros_like(p.w3), 0.0)


def forward_features(params: MlpParams, x: np.ndarray):
    """Scores plus the intermediate activations needed by backward_chain."""
    if x.shape[1] != params.feature_dim:
        raise DimMismatch(f"features have dim {x.shape[1]}, model expects "
                          f"{params.feature_dim}")
    z1 = x @ params.w1 + params.b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ params.w2 + params.b2
    a2 = np.maximum(z2, 0.0)
    scores = a2 @ params.w3 + params.b3
    return scores, z1, a1, z2, a2


def forward_scores(params: MlpParams, q: QueryInstance) -> np.ndarray:
    """Log scores for every item of the query."""
    return forward_features(params, q.feature_matrix)[0]


def backward_chain(params: MlpParams, q: QueryInstance, upstream) -> MlpParams:
    """Chain per-item score gradients into parameter gradients."""
    u = np.asarray(getattr(upstream, "values", upstream), dtype=np.float64)
    if u.shape != (len(q.items),):
        raise DimMismatch(f"upstream shape {u.shape} != ({len(q.items)},)")
    x = q.feature_matrix
    _, z1, a1, z2, a2 = forward_features(params, x)

    dw3 = a2.T @ u
    db3 = float(np.sum(u))
    da2 = np.outer(u, params.w3)
    dz2 = da2 * (z2 > 0.0)
    dw2 = a1.T @ dz2
    db2 = dz2.sum(axis=0)
    da1 = dz2 @ params.w2.T
    dz1 = da1 * (z1 > 0.0)
    dw1 = x.T @ dz1
    db1 = dz1.sum(axis=0)
    return MlpParams(w1=dw1, b1=db1, w2=dw2, b2=db2, w3=dw3, b3=db3)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    mode: str = "group_fair"                # or "plain_pl"
    learning_rate: float = 0.001
    batch_size: int = 512                   # items per gradient step
    n_gradient_samples: int = 25            # M
    seed: int = 0
    train_on: str = "observed"              # or "true"
    val_fraction: float = 0.2
    eval_samples: int = 100                 # per validation query per epoch

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.n_gradient_samples < 1:
            raise ValueError("n_gradient_samples must be >= 1")
        if self.mode not in ("plain_pl", "group_fair"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.train_on not in ("observed", "true"):
            raise ValueError(f"unknown train_on {self.train_on!r}")


@dataclass
class TrainResult:
    params: MlpParams
    log: list = field(default_factory=list)


def _train_rho(q: QueryInstance, cfg: TrainConfig) -> np.ndarray:
    return q.relevance_true_arr if cfg.train_on == "true" else q.relevance_observed_arr


def _query_gradient(params, q, cfg, constraints, theta, rng) -> MlpParams:
    scores = forward_scores(params, q)
    if not np.all(np.isfinite(scores)):
        raise NonFiniteLoss(f"non-finite scores for query {q.query_id}")
    rho = _train_rho(q, cfg)
    if cfg.mode == "group_fair":
        grad = algorithm1_gradient(q, scores, constraints[q.query_id], theta,
                                   cfg.n_gradient_samples, rng, rho=rho)
    else:
        grad = plain_plrank3_gradient(q, scores, theta, cfg.n_gradient_samples,
                                      rng, rho=rho)
    return backward_chain(params, q, grad)


def _epoch_eval(params, queries, cfg, constraints, theta, rng) -> dict:
    ndcg_obs, ndcg_true, viol = [], [], []
    for q in queries:
        scores = forward_scores(params, q)
        if cfg.mode == "group_fair":
            policy = FairPolicy.build(q, scores, constraints[q.query_id])
            sampler = fair_policy_sampler(policy)
            c = policy.constraints
        else:
            k = theta.k if isinstance(theta, PositionDiscounts) else len(theta)
            sampler = plain_policy_sampler(q, scores, k)
            c = (validate_constraints(constraints[q.query_id], q)
                 if constraints and q.query_id in constraints else None)
        obs, _ = expected_ndcg(sampler, q.relevance_observed_arr, theta, q,
                               cfg.eval_samples, rng)
        true, _ = expected_ndcg(sampler, q.relevance_true_arr, theta, q,
                                cfg.eval_samples, rng)
        ndcg_obs.append(obs)
        ndcg_true.append(true)
        if c is not None:
            viol.append(fairness_violation_rate(sampler, c, cfg.eval_samples, rng))
    return {
        "ndcg_observed": float(np.mean(ndcg_obs)),
        "ndcg_true": float(np.mean(ndcg_true)),
        "fairness_violation_rate": float(np.mean(viol)) if viol else float("nan"),
    }


def train(dataset: DatasetManifest, cfg: TrainConfig, constraints: dict | None,
          theta: PositionDiscounts) -> TrainResult:
    """SGD ascent on the sampled objective gradient.

    constraints maps query_id -> FairnessConstraints (required for
    group_fair mode; optional for plain mode, used only for logging).
    Batches accumulate whole queries until batch_size items; the update is
    the mean of per-query parameter gradients. Deterministic per seed.
    """
    if cfg.mode == "group_fair":
        if constraints is None:
            raise ValueError("group_fair mode requires per-query constraints")
        for q in dataset.queries:
            validate_constraints(constraints[q.query_id], q)

    if 0.0 < cfg.val_fraction < 1.0 and len(dataset.queries) >= 5:
        train_split, val_split = split_train_test(
            dataset, 1.0 - cfg.val_fraction, derive_rng(cfg.seed, "val-split").integers(2**31))
        val_queries = val_split.queries
    else:
        train_split, val_queries = dataset, dataset.queries

    params = MlpParams.init(dataset.feature_dim, derive_rng(cfg.seed, "init"))
    log = []
    queries = train_split.queries
    for epoch in range(cfg.epochs):
        order = derive_rng(cfg.seed, "shuffle", epoch).permutation(len(queries))
        batch, batch_items = [], 0
        for qi in order:
            q = queries[qi]
            batch.append(q)
            batch_items += len(q.items)
            if batch_items < cfg.batch_size and qi != order[-1]:
                continue
            total = zeros_like_params(params)
            for bq in batch:
                g = _query_gradient(params, bq, cfg, constraints, theta,
                                    derive_rng(cfg.seed, "grad", epoch, bq.query_id))
                total = total.scaled_add(g, 1.0)
            if not total.is_finite():
                raise NonFiniteLoss(f"non-finite gradient in epoch {epoch}")
            params = params.scaled_add(total, cfg.learning_rate / len(batch))
            batch, batch_items = [], 0
        row = {"epoch": epoch, "split": "val",
               **_epoch_eval(params, val_queries, cfg, constraints, theta,
                             derive_rng(cfg.seed, "eval", epoch))}
        log.append(row)
    return TrainResult(params=params, log=log)


def save_checkpoint(params: MlpParams, path, meta: dict | None = None) -> None:
    payload = {
        "format": "fairpl-mlp",
        "version": 1,
        "feature_dim": params.feature_dim,
        "hidden": params.hidden,
        "meta": meta or {},
        "params": {
            "w1": params.w1.tolist(), "b1": params.b1.tolist(),
            "w2": params.w2.tolist(), "b2": params.b2.tolist(),
            "w3": params.w3.tolist(), "b3": params.b3,
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_checkpoint(path):
    """(params, meta); raises IncompatibleCheckpoint on format problems."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != "fairpl-mlp" or payload.get("version") != 1:
        raise IncompatibleCheckpoint(f"{path} is not a fairpl-mlp v1 checkpoint")
    p = payload["params"]
    params = MlpParams(
        w1=np.array(p["w1"]), b1=np.array(p["b1"]),
        w2=np.array(p["w2"]), b2=np.array(p["b2"]),
        w3=np.array(p["w3"]), b3=float(p["b3"]),
    )
    if params.w1.shape != (payload["feature_dim"], payload["hidden"]):
        raise IncompatibleCheckpoint(f"shape header mismatch in {path}")
    return params, payload.get("meta", {})
