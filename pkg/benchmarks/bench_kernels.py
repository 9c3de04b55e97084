#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Times the two hot loops (sequential PL sampling and the per-sample gradient
statistics) plus an end-to-end gradient estimate. Run after building the
extension:

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from fairpl import _kernels, _kernels_py
from fairpl.core import FairnessConstraints, Item, PositionDiscounts, QueryInstance
from fairpl.gradients import algorithm1_gradient
from fairpl.rng import derive_rng


def timeit(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_sampling(backend, n_items, slots, n_samples, seed=0):
    rng = np.random.default_rng(seed)
    weights = np.exp(rng.normal(size=n_items) - rng.normal())
    weights /= weights.max()
    uniforms = rng.random((n_samples, slots))
    return timeit(lambda: backend.sample_pl_rankings(weights, slots, uniforms))


def bench_plrank3(backend, n_items, k, n_samples, seed=0):
    rng = np.random.default_rng(seed)
    weights = np.exp(rng.normal(size=n_items))
    weights /= weights.max()
    rho = rng.uniform(size=n_items)
    theta = 1.0 / np.log2(np.arange(2, k + 2))
    rankings = np.stack([rng.permutation(n_items)[:k] for _ in range(n_samples)])
    theta_flat = np.tile(theta, n_samples)
    rank_flat = rankings.reshape(-1).astype(np.int64)
    offsets = np.arange(n_samples + 1, dtype=np.int64) * k

    def run():
        out = np.zeros(n_items)
        backend.plrank3_accumulate(weights, rho, theta_flat, rank_flat, offsets, out)

    return timeit(run)


def make_query(n_items, seed=0):
    rng = np.random.default_rng(seed)
    items = tuple(
        Item(item_id=f"d{i}", features=(0.0,), relevance_true=float(r),
             relevance_observed=float(r), group=1 + i % 2)
        for i, r in enumerate(rng.uniform(size=n_items)))
    return QueryInstance(query_id="bench", items=items, n_groups=2)


def bench_gradient(n_items, k, m_samples):
    q = make_query(n_items)
    c = FairnessConstraints(k=k, lower=(2, 2), upper=(k - 2, k - 2))
    theta = PositionDiscounts.ndcg(k)
    scores = np.random.default_rng(1).normal(size=n_items)
    q.group_pools, q.relevance_observed_arr  # warm caches
    return timeit(lambda: algorithm1_gradient(q, scores, c, theta, m_samples,
                                              derive_rng(0, "bench")))


def main():
    if _kernels.BACKEND != "compiled":
        print("warning: compiled extension not available; comparing pure vs pure")
    rows = []
    for n, slots, m in ((50, 10, 20000), (500, 10, 5000), (2000, 25, 1000)):
        t_c = bench_sampling(_kernels, n, slots, m)
        t_p = bench_sampling(_kernels_py, n, slots, m)
        rows.append((f"sample n={n} slots={slots} x{m}", t_c, t_p))
    for n, k, m in ((50, 10, 20000), (500, 10, 5000), (2000, 25, 1000)):
        t_c = bench_plrank3(_kernels, n, k, m)
        t_p = bench_plrank3(_kernels_py, n, k, m)
        rows.append((f"plrank3 n={n} k={k} x{m}", t_c, t_p))

    print(f"{'case':<34} {'compiled':>10} {'pure':>10} {'speedup':>8}")
    for name, t_c, t_p in rows:
        print(f"{name:<34} {t_c * 1e3:>8.1f}ms {t_p * 1e3:>8.1f}ms {t_p / t_c:>7.1f}x")

    t = bench_gradient(1000, 10, 200)
    print(f"\nend-to-end algorithm-1 gradient (n=1000, k=10, M=200, "
          f"{_kernels.BACKEND} backend): {t * 1e3:.1f}ms")


if __name__ == "__main__":
    main()
