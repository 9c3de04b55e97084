"""Pure-numpy kernels: sequential PL sampling and PL-Rank-3 statistics.

Reference implementation of the hot loops; `fairpl._speedups` is the compiled
twin. Both consume pre-drawn uniforms so rankings are identical across
backends for the same random stream.
"""

from __future__ import annotations

import numpy as np

BACKEND = "pure"

# keep (chunk, n) temporaries around a few MB
_CHUNK_BUDGET = 1_000_000

# successive-subtraction guard: recompute the softmax denominator from
# scratch once it shrinks below this fraction of the initial sum
Z_RECOMPUTE_RATIO = 1e-6


def sample_pl_rankings(weights: np.ndarray, slots: int, uniforms: np.ndarray) -> np.ndarray:
    """Sample rankings without replacement, item i drawn proportional to weights[i].

    weights: (n,) non-negative, max-shifted exponentials.
    uniforms: (m, slots) iid U[0,1) draws, one per placement.
    Returns (m, slots) int64 indices into weights.
    """
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    uniforms = np.ascontiguousarray(uniforms, dtype=np.float64)
    n = weights.shape[0]
    m = uniforms.shape[0]
    if slots > n:
        raise ValueError(f"slots {slots} > pool size {n}")
    out = np.empty((m, slots), dtype=np.int64)
    if m == 0 or slots == 0:
        return out
    chunk = max(1, _CHUNK_BUDGET // max(n, 1))
    for start in range(0, m, chunk):
        stop = min(start + chunk, m)
        _sample_block(weights, slots, uniforms[start:stop], out[start:stop])
    return out


def _sample_block(weights, slots, uniforms, out):
    b, n = uniforms.shape[0], weights.shape[0]
    alive = np.ones((b, n), dtype=np.float64)
    rows = np.arange(b)
    for t in range(slots):
        cs = np.cumsum(weights[None, :] * alive, axis=1)
        target = uniforms[:, t] * cs[:, -1]
        hit = cs > target[:, None]
        idx = np.argmax(hit, axis=1)
        missed = ~hit[rows, idx]
        if np.any(missed):
            # u*total rounded up to total (or all weights dead-zero):
            # fall back to the last alive index
            for r in np.flatnonzero(missed):
                idx[r] = np.flatnonzero(alive[r])[-1]
        out[:, t] = idx
        alive[rows, idx] = 0.0


def plrank3_accumulate(weights: np.ndarray,
                       rho: np.ndarray,
                       theta_flat: np.ndarray,
                       rank_flat: np.ndarray,
                       offsets: np.ndarray,
                       out: np.ndarray) -> None:
    """Accumulate per-sample score-gradient contributions into `out`.

    Sample s occupies theta_flat/rank_flat[offsets[s]:offsets[s+1]]:
    the position discounts of the ranks it filled (ascending rank order)
    and the chosen pool indices. For every sample and every pool item d,

        placed at within-sample position t:
            future_reward(t) + w_d * (rho_d * DR(t) - RI(t))
        never placed:
            w_d * (rho_d * DR(end) - RI(end))

    with DR/RI the running sums of theta/Z and inclusive-suffix-reward/Z.
    The caller divides by the sample count.
    """
    weights = np.asarray(weights, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    theta_flat = np.asarray(theta_flat, dtype=np.float64)
    rank_flat = np.asarray(rank_flat, dtype=np.int64)
    offsets = np.asarray(offsets, dtype=np.int64)

    # cumsum accumulates sequentially (np.sum is pairwise), matching the
    # compiled kernel's loop bit for bit so both backends train identically
    total = float(np.cumsum(weights)[-1]) if weights.size else 0.0
    floor = Z_RECOMPUTE_RATIO * total
    n_samples = offsets.shape[0] - 1
    for s in range(n_samples):
        lo, hi = offsets[s], offsets[s + 1]
        kk = hi - lo
        if kk == 0:
            continue
        chosen = rank_flat[lo:hi]
        theta = theta_flat[lo:hi]
        w_chosen = weights[chosen]

        z = np.empty(kk, dtype=np.float64)
        acc = total
        for t in range(kk):
            if acc < floor:
                mask = np.ones(weights.shape[0], dtype=bool)
                mask[chosen[:t]] = False
                acc = float(np.cumsum(weights[mask])[-1])
            z[t] = acc
            acc -= w_chosen[t]

        reward = theta * rho[chosen]
        suffix_incl = np.cumsum(reward[::-1])[::-1]          # inclusive of t
        dr = np.cumsum(theta / z)
        ri = np.cumsum(suffix_incl / z)
        dr_end = dr[-1]
        ri_end = ri[-1]

        out += weights * (rho * dr_end - ri_end)
        strict_suffix = np.empty(kk, dtype=np.float64)
        strict_suffix[:-1] = suffix_incl[1:]
        strict_suffix[-1] = 0.0
        out[chosen] += strict_suffix + w_chosen * (
            rho[chosen] * (dr - dr_end) - (ri - ri_end))
