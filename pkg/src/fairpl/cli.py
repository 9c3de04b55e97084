"""Command-line pipeline: train, eval, sample, experiment.

Configuration is JSON; a few flags (--seed, --out) override config fields.
The experiment command sweeps bias levels x methods x runs and emits
long-format CSV rows (dataset, method, beta, metric, rank_or_epoch, value,
stderr) ready for plotting. FAIRPL_WORKERS controls sweep parallelism.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .core import PositionDiscounts, derive_constraints_from_delta, per_query_constraints
from .data import BiasSpec, DatasetManifest, inject_bias, parse_ranking_file, split_train_test, synth_generate
from .errors import FairplError, IncompatibleCheckpoint, UnknownQuery
from .metrics import expected_ndcg, fairness_violation_rate, per_rank_group_fraction
from .mlp import TrainConfig, forward_scores, load_checkpoint, save_checkpoint, train
from .plackett import pl_log_prob
from .policy import (FairPolicy, fair_policy_sampler, fair_ranking_log_prob,
                     plain_policy_sampler, sample_fair_ranking, sample_plain_ranking)
from .rerank import gak19_detgreedy, gdl22_postprocess
from .rng import derive_rng, stable_hash

METHODS = ("plain_pl", "group_fair", "plain_pl+gdl22", "plain_pl+gak19", "plain_pl_true")

CSV_COLUMNS = ("dataset", "method", "beta", "metric", "rank_or_epoch", "value", "stderr")


def load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise FairplError(f"config {path} is not valid JSON: {exc}") from None


def build_dataset(cfg: dict) -> DatasetManifest:
    spec = cfg.get("dataset")
    if not spec:
        raise FairplError("config is missing the 'dataset' field")
    if "synthetic" in spec:
        s = spec["synthetic"]
        return synth_generate(
            n_queries=s["n_queries"],
            items_per_query=s["items_per_query"],
            n_groups=s["n_groups"],
            proportions=s["proportions"],
            feature_dim=s["feature_dim"],
            seed=s.get("seed", 0),
            name=s.get("name", "synthetic"),
        )
    if "path" in spec:
        return parse_ranking_file(spec["path"], max_label=spec.get("max_label"),
                                  name=spec.get("name"))
    raise FairplError("dataset config needs either 'synthetic' or 'path'")


def apply_bias(dataset: DatasetManifest, cfg: dict, beta=None) -> DatasetManifest:
    """Bias from the config, or a scalar beta applied to the minority group."""
    if beta is not None:
        vec = [1.0] * dataset.n_groups
        vec[dataset.minority_group - 1] = float(beta)
        return inject_bias(dataset, BiasSpec(tuple(vec)))
    if "bias_beta" in cfg:
        return inject_bias(dataset, BiasSpec(tuple(cfg["bias_beta"])))
    return dataset


def train_config_from(cfg: dict, seed: int | None = None, mode: str | None = None,
                      train_on: str | None = None) -> TrainConfig:
    return TrainConfig(
        epochs=cfg.get("epochs", 30),
        mode=mode or cfg.get("mode", "group_fair"),
        learning_rate=cfg.get("learning_rate", 0.001),
        batch_size=cfg.get("batch_size", 512),
        n_gradient_samples=cfg.get("M", 25),
        seed=cfg.get("seed", 0) if seed is None else seed,
        train_on=train_on or cfg.get("train_on", "observed"),
        val_fraction=cfg.get("val_fraction", 0.2),
        eval_samples=cfg.get("epoch_eval_samples", 50),
    )


def _splits(dataset: DatasetManifest, cfg: dict):
    return split_train_test(dataset, cfg.get("train_fraction", 0.75),
                            cfg.get("seed", 0))


def _write_csv(path, columns, rows, append=False):
    mode = "a" if append and os.path.exists(path) else "w"
    with open(path, mode, encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        if mode == "w":
            writer.writerow(columns)
        writer.writerows(rows)


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    os.makedirs(args.out, exist_ok=True)
    dataset = apply_bias(build_dataset(cfg), cfg)
    train_split, _ = _splits(dataset, cfg)
    k = cfg.get("k", 10)
    theta = PositionDiscounts.ndcg(k)
    constraints = per_query_constraints(train_split.queries, cfg.get("delta", 0.05), k)
    tc = train_config_from(cfg)
    result = train(train_split, tc, constraints, theta)

    ckpt_path = os.path.join(args.out, "checkpoint.json")
    save_checkpoint(result.params, ckpt_path, meta={
        "mode": tc.mode, "k": k, "delta": cfg.get("delta", 0.05),
        "dataset": dataset.name, "seed": tc.seed, "train_on": tc.train_on,
    })
    log_path = os.path.join(args.out, "training_log.csv")
    _write_csv(log_path,
               ("epoch", "split", "ndcg_observed", "ndcg_true", "fairness_violation_rate"),
               [(r["epoch"], r["split"], r["ndcg_observed"], r["ndcg_true"],
                 r["fairness_violation_rate"]) for r in result.log])
    print(f"wrote {ckpt_path} and {log_path}")
    return 0


def _policy_sampler(method: str, q, scores, constraints, k):
    """rng -> RankingOutcome for one query under the given method."""
    if method in ("plain_pl", "plain_pl_true"):
        return plain_policy_sampler(q, scores, k)
    if method == "group_fair":
        policy = FairPolicy.build(q, scores, constraints[q.query_id])
        return fair_policy_sampler(policy)
    if method == "plain_pl+gdl22":
        return lambda rng: gdl22_postprocess(scores, q, constraints[q.query_id], rng)
    if method == "plain_pl+gak19":
        fixed = gak19_detgreedy(scores, q, constraints[q.query_id])
        return lambda rng: fixed
    raise FairplError(f"unknown method {method!r}")


def evaluate_policy(method: str, params, test: DatasetManifest, cfg: dict,
                    rng) -> dict:
    """Dataset-level metrics for one trained model under one method."""
    k = cfg.get("k", 10)
    delta = cfg.get("delta", 0.05)
    theta = PositionDiscounts.ndcg(k)
    constraints = per_query_constraints(test.queries, delta, k)
    n_samples = cfg.get("eval_samples", 500)
    deterministic = method == "plain_pl+gak19"
    n_eff = 1 if deterministic else n_samples

    ndcg_true, ndcg_obs, viol, fracs = [], [], [], []
    for q in test.queries:
        scores = forward_scores(params, q)
        sampler = _policy_sampler(method, q, scores, constraints, k)
        t_mean, _ = expected_ndcg(sampler, q.relevance_true_arr, theta, q, n_eff, rng)
        o_mean, _ = expected_ndcg(sampler, q.relevance_observed_arr, theta, q, n_eff, rng)
        ndcg_true.append(t_mean)
        ndcg_obs.append(o_mean)
        viol.append(fairness_violation_rate(sampler, constraints[q.query_id],
                                            n_eff, rng))
        fracs.append(per_rank_group_fraction(sampler, test.minority_group, n_eff, rng))
    return {
        "ndcg_true": float(np.mean(ndcg_true)),
        "ndcg_observed": float(np.mean(ndcg_obs)),
        "violation_rate": float(np.mean(viol)),
        "minority_fraction": np.mean(np.stack(fracs), axis=0),
    }


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    os.makedirs(args.out, exist_ok=True)
    params, meta = load_checkpoint(args.checkpoint)
    dataset = apply_bias(build_dataset(cfg), cfg)
    if dataset.feature_dim != params.feature_dim:
        raise IncompatibleCheckpoint(
            f"checkpoint expects feature_dim {params.feature_dim}, "
            f"dataset has {dataset.feature_dim}")
    _, test = _splits(dataset, cfg)
    method = meta.get("mode", cfg.get("mode", "plain_pl"))
    rng = derive_rng(cfg.get("seed", 0), "cli-eval")
    res = evaluate_policy(method, params, test, cfg, rng)

    k = cfg.get("k", 10)
    delta = cfg.get("delta", 0.05)
    bounds = derive_constraints_from_delta(dataset.group_proportions(), delta, k)
    j = dataset.minority_group - 1
    rows = [
        (dataset.name, method, "", "ndcg_true", "", res["ndcg_true"], ""),
        (dataset.name, method, "", "ndcg_observed", "", res["ndcg_observed"], ""),
        (dataset.name, method, "", "fairness_violation_rate", "", res["violation_rate"], ""),
    ]
    for i, v in enumerate(res["minority_fraction"], start=1):
        rows.append((dataset.name, method, "", "minority_fraction", i, v, ""))
        rows.append((dataset.name, method, "", "minority_lower_bound", i,
                     bounds.lower[j] / k, ""))
        rows.append((dataset.name, method, "", "minority_upper_bound", i,
                     bounds.upper[j] / k, ""))
    out_path = os.path.join(args.out, "metrics.csv")
    _write_csv(out_path, CSV_COLUMNS, rows)
    print(f"wrote {out_path}")
    return 0


def cmd_sample(args) -> int:
    cfg = load_config(args.config)
    params, meta = load_checkpoint(args.checkpoint)
    dataset = apply_bias(build_dataset(cfg), cfg)
    q = dataset.query_by_id(args.query_id)
    if q is None:
        raise UnknownQuery(f"query {args.query_id!r} not in dataset")
    k = cfg.get("k", 10)
    delta = cfg.get("delta", 0.05)
    mode = meta.get("mode", cfg.get("mode", "plain_pl"))
    constraints = per_query_constraints([q], delta, k)[q.query_id]
    scores = forward_scores(params, q)
    rng = derive_rng(args.seed if args.seed is not None else cfg.get("seed", 0),
                     "cli-sample", args.query_id)
    from .core import check_ex_post_fair
    for _ in range(args.n):
        if mode == "group_fair":
            policy = FairPolicy.build(q, scores, constraints)
            outcome = sample_fair_ranking(policy, rng)
            lp = fair_ranking_log_prob(outcome, policy)
        else:
            outcome = sample_plain_ranking(q, scores, k, rng)
            score_map = {d: float(s) for d, s in zip(q.item_ids, scores)}
            lp = pl_log_prob(list(outcome.ranked_items), list(q.item_ids), score_map)
        print(json.dumps({
            "query_id": q.query_id,
            "ranked_items": list(outcome.ranked_items),
            "log_prob": lp if lp is None else float(lp),
            "fair": bool(check_ex_post_fair(outcome, constraints)),
        }))
    return 0


def run_cell(cfg: dict, beta: float, run: int, methods) -> list:
    """Train/evaluate every requested method for one (beta, run) cell."""
    base = build_dataset(cfg)
    biased = apply_bias(base, cfg, beta=beta)
    train_split, test_split = _splits(biased, cfg)
    k = cfg.get("k", 10)
    theta = PositionDiscounts.ndcg(k)
    delta = cfg.get("delta", 0.05)
    constraints = per_query_constraints(train_split.queries, delta, k)
    cell_seed = stable_hash("cell", cfg.get("seed", 0), beta, run) % (2**31)

    params_by_base = {}
    if any(m in methods for m in ("plain_pl", "plain_pl+gdl22", "plain_pl+gak19")):
        tc = train_config_from(cfg, seed=cell_seed, mode="plain_pl")
        params_by_base["plain_pl"] = train(train_split, tc, constraints, theta).params
    if "plain_pl_true" in methods:
        tc = train_config_from(cfg, seed=cell_seed, mode="plain_pl", train_on="true")
        params_by_base["plain_pl_true"] = train(train_split, tc, constraints, theta).params
    if "group_fair" in methods:
        tc = train_config_from(cfg, seed=cell_seed, mode="group_fair")
        params_by_base["group_fair"] = train(train_split, tc, constraints, theta).params

    rows = []
    for method in methods:
        base_key = "plain_pl" if method.startswith("plain_pl+") else method
        params = params_by_base[base_key]
        rng = derive_rng(cell_seed, "cell-eval", method)
        res = evaluate_policy(method, params, test_split, cfg, rng)
        rows.append((biased.name, method, beta, run, "ndcg_true", "", res["ndcg_true"]))
        rows.append((biased.name, method, beta, run, "ndcg_observed", "",
                     res["ndcg_observed"]))
        rows.append((biased.name, method, beta, run, "fairness_violation_rate", "",
                     res["violation_rate"]))
        for i, v in enumerate(res["minority_fraction"], start=1):
            rows.append((biased.name, method, beta, run, "minority_fraction", i, v))
    return rows


def _cell_job(payload):
    cfg, beta, run, methods = payload
    return run_cell(cfg, beta, run, methods)


def cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    os.makedirs(args.out, exist_ok=True)
    beta_grid = cfg.get("beta_grid", [1.0])
    methods = cfg.get("methods", list(METHODS))
    runs = cfg.get("runs", 1)
    for m in methods:
        if m not in METHODS:
            raise FairplError(f"unknown method {m!r}; known: {METHODS}")

    cells_path = os.path.join(args.out, "cells.csv")
    done = set()
    if os.path.exists(cells_path):
        with open(cells_path, "r", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                done.add((row["method"], float(row["beta"]), int(row["run"])))

    jobs = []
    for beta in beta_grid:
        for run in range(runs):
            todo = [m for m in methods if (m, float(beta), run) not in done]
            if todo:
                jobs.append((cfg, float(beta), run, todo))

    workers = int(os.environ.get("FAIRPL_WORKERS", "1"))
    cell_columns = ("dataset", "method", "beta", "run", "metric", "rank_or_epoch", "value")
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rows in pool.map(_cell_job, jobs):
                _write_csv(cells_path, cell_columns, rows, append=True)
    else:
        for job in jobs:
            _write_csv(cells_path, cell_columns, _cell_job(job), append=True)

    # aggregate over runs
    by_key: dict = {}
    dataset_name = ""
    with open(cells_path, "r", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            dataset_name = row["dataset"]
            key = (row["method"], float(row["beta"]), row["metric"], row["rank_or_epoch"])
            by_key.setdefault(key, []).append(float(row["value"]))
    agg_rows = []
    for (method, beta, metric, rank), values in sorted(by_key.items()):
        arr = np.array(values)
        stderr = float(arr.std(ddof=1) / np.sqrt(len(arr))) if len(arr) > 1 else ""
        agg_rows.append((dataset_name, method, beta, metric, rank,
                         float(arr.mean()), stderr))
    agg_path = os.path.join(args.out, "results.csv")
    _write_csv(agg_path, CSV_COLUMNS, agg_rows)
    print(f"wrote {cells_path} and {agg_path}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fairpl",
                                     description="Group-fair Plackett-Luce LTR pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a scorer from a JSON config")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out", default="out")
    p_train.add_argument("--seed", type=int)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--out", default="out")
    p_eval.add_argument("--seed", type=int)
    p_eval.set_defaults(func=cmd_eval)

    p_sample = sub.add_parser("sample", help="emit rankings for one query as JSON lines")
    p_sample.add_argument("--checkpoint", required=True)
    p_sample.add_argument("--config", required=True)
    p_sample.add_argument("--query-id", required=True, dest="query_id")
    p_sample.add_argument("-n", type=int, default=1)
    p_sample.add_argument("--seed", type=int)
    p_sample.set_defaults(func=cmd_sample)

    p_exp = sub.add_parser("experiment", help="sweep beta x methods x runs")
    p_exp.add_argument("--config", required=True)
    p_exp.add_argument("--out", default="out")
    p_exp.add_argument("--seed", type=int)
    p_exp.set_defaults(func=cmd_experiment)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FairplError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
