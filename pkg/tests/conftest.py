import numpy as np
import pytest

from fairpl.core import FairnessConstraints, Item, QueryInstance


def make_query(groups, rhos=None, qid="q", feature_dim=1, seed=0):
    """Small query instance with the given group labels and relevances."""
    rng = np.random.default_rng(seed)
    if rhos is None:
        rhos = rng.uniform(0.0, 1.0, size=len(groups))
    items = tuple(
        Item(
            item_id=f"d{i}",
            features=tuple(rng.normal(size=feature_dim)),
            relevance_true=float(r),
            relevance_observed=float(r),
            group=int(g),
        )
        for i, (g, r) in enumerate(zip(groups, rhos))
    )
    return QueryInstance(query_id=qid, items=items, n_groups=int(max(groups)))


@pytest.fixture
def two_by_two_query():
    """2 groups x 2 items, the 8-fair-ranking instance with k=2, L=U=(1,1)."""
    q = make_query([1, 1, 2, 2], [1.0, 0.0, 1.0, 0.0])
    c = FairnessConstraints(k=2, lower=(1, 1), upper=(1, 1))
    return q, c
