"""Post-processing re-rankers applied to a trained model's scores.

Both enforce the representation bounds on every output. The randomized one
draws a fair group assignment and fills each group's ranks by score order;
the deterministic greedy walks the ranks keeping every group between its
pro-rated minimum due count and maximum cap.
"""

from __future__ import annotations

import math

import numpy as np

from .assignments import build_count_table, sample_assignment
from .core import FairnessConstraints, QueryInstance, RankingOutcome, validate_constraints
from .errors import ConstructionFailure
from .policy import _scores_array, outcome_from_indices


def gdl22_postprocess(scores, q: QueryInstance, c: FairnessConstraints,
                      rng: np.random.Generator) -> RankingOutcome:
    """Random fair assignment, deterministic within-group fill by score."""
    validated = validate_constraints(c, q)
    arr = _scores_array(q, scores)
    table = build_count_table(validated)
    gamma = sample_assignment(table, validated, rng)
    ranked = [-1] * validated.k
    for j in range(1, q.n_groups + 1):
        positions = gamma.positions_of(j)
        if not positions:
            continue
        pool = q.group_pools[j - 1]
        best_first = pool[np.argsort(-arr[pool], kind="stable")]
        for t, pos in enumerate(positions):
            ranked[pos] = int(best_first[t])
    return outcome_from_indices(q, ranked)


def gak19_detgreedy(scores, q: QueryInstance, c: FairnessConstraints) -> RankingOutcome:
    """Deterministic greedy re-ranker with pro-rated per-rank bounds.

    At rank i (1-based) group j owes ceil(L_j*i/k) placements and is capped
    at min(floor(U_j*i/k)+1, U_j). Groups below their due count are served
    first (best next-item score breaks ties); otherwise the best remaining
    item whose group is under its cap is placed. A dead end (cap lockout
    while a group still owes placements later) backtracks one rank and
    forces the starved group.
    """
    validated = validate_constraints(c, q)
    arr = _scores_array(q, scores)
    k, n_groups = validated.k, q.n_groups

    remaining = []
    for j in range(n_groups):
        pool = q.group_pools[j]
        remaining.append(list(pool[np.argsort(-arr[pool], kind="stable")]))
    counts = [0] * n_groups
    ranked: list = []
    forced: dict = {}

    def due(j, i):
        return math.ceil(validated.lower[j] * i / k)

    def cap(j, i):
        return min(math.floor(validated.upper[j] * i / k) + 1, validated.upper[j])

    i = 1
    while i <= k:
        if i in forced:
            choice = forced[i]
        else:
            needy = [j for j in range(n_groups)
                     if counts[j] < due(j, i) and remaining[j]]
            if needy:
                choice = max(needy, key=lambda j: arr[remaining[j][0]])
            else:
                open_groups = [j for j in range(n_groups)
                               if remaining[j] and counts[j] < cap(j, i)]
                if not open_groups:
                    raise ConstructionFailure(f"no placeable group at rank {i}")
                choice = max(open_groups, key=lambda j: arr[remaining[j][0]])

        # lookahead: remaining slots must still cover every group's shortfall
        counts[choice] += 1
        shortfall = sum(max(0, validated.lower[j] - counts[j]) for j in range(n_groups))
        if shortfall > k - i:
            counts[choice] -= 1
            starved = max(range(n_groups),
                          key=lambda j: validated.lower[j] - counts[j])
            if forced.get(i) == starved:
                raise ConstructionFailure(f"greedy dead end at rank {i}")
            forced[i] = starved
            # retry this rank with the starved group forced
            continue
        ranked.append(remaining[choice].pop(0))
        i += 1

    return outcome_from_indices(q, ranked)
