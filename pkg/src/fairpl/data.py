"""Dataset loading, bias injection, splitting, and synthetic generation.

File format: extended LibSVM ranking lines

    <label> qid:<id> gid:<group> <fid>:<value> ...

with 1-based ascending feature ids. The last feature id on a line declares
the feature dimension and must match across all lines; interior zero
features may be omitted. Labels are normalized to relevance label/max_label.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import Item, QueryInstance
from .errors import (EmptyDataset, InconsistentFeatureDim, MissingGroup, ParseError,
                     TooFewQueries)
from .rng import derive_rng


@dataclass(frozen=True)
class DatasetManifest:
    """A named collection of queries sharing feature dimension and groups."""

    name: str
    queries: tuple
    max_label: int
    group_names: tuple
    minority_group: int

    @property
    def n_groups(self) -> int:
        return len(self.group_names)

    @property
    def feature_dim(self) -> int:
        return len(self.queries[0].items[0].features)

    def query_by_id(self, query_id: str):
        for q in self.queries:
            if q.query_id == query_id:
                return q
        return None

    def group_proportions(self) -> tuple:
        """Item-count fractions per group over the whole dataset."""
        counts = np.zeros(self.n_groups)
        for q in self.queries:
            counts += np.array(q.group_sizes)
        return tuple(counts / counts.sum())


@dataclass(frozen=True)
class BiasSpec:
    """Per-group multiplicative attenuation of observed relevance."""

    beta: tuple

    def __post_init__(self):
        for b in self.beta:
            if not 0.0 <= b <= 1.0:
                raise ValueError(f"beta entries must lie in [0,1], got {b}")


def _parse_line(line: str, line_no: int):
    tokens = line.split()
    if len(tokens) < 3:
        raise ParseError(line_no, f"expected label, qid, gid and features, got {line!r}")
    try:
        label = float(tokens[0])
    except ValueError:
        raise ParseError(line_no, f"bad label {tokens[0]!r}") from None
    if label < 0:
        raise ParseError(line_no, f"negative label {label}")
    if not tokens[1].startswith("qid:"):
        raise ParseError(line_no, f"expected qid:<id>, got {tokens[1]!r}")
    qid = tokens[1][4:]
    if not tokens[2].startswith("gid:"):
        raise MissingGroup(line_no, f"expected gid:<group>, got {tokens[2]!r}")
    try:
        gid = int(tokens[2][4:])
    except ValueError:
        raise MissingGroup(line_no, f"bad gid {tokens[2]!r}") from None
    if gid < 1:
        raise ParseError(line_no, f"group ids are 1-based, got {gid}")
    feats = {}
    last_fid = 0
    for tok in tokens[3:]:
        fid_str, _, val_str = tok.partition(":")
        try:
            fid = int(fid_str)
            val = float(val_str)
        except ValueError:
            raise ParseError(line_no, f"bad feature token {tok!r}") from None
        if fid <= last_fid:
            raise ParseError(line_no, f"feature ids must be 1-based ascending, got {fid}")
        last_fid = fid
        feats[fid] = val
    if last_fid == 0:
        raise ParseError(line_no, "no features on line")
    return qid, gid, label, feats, last_fid


def parse_ranking_file(path, max_label: int | None = None,
                       name: str | None = None) -> DatasetManifest:
    """Parse an extended LibSVM ranking file into a manifest.

    max_label defaults to the largest label in the file; pass it explicitly
    when the file does not contain the top grade.
    """
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            rows.append((line_no, *_parse_line(line, line_no)))
    if not rows:
        raise EmptyDataset(f"{path} contains no data lines")

    dim = rows[0][5]
    for line_no, _, _, _, _, last_fid in rows:
        if last_fid != dim:
            raise InconsistentFeatureDim(
                line_no, f"feature dimension {last_fid} != {dim} declared earlier")

    observed_max = max(r[3] for r in rows)
    if max_label is None:
        max_label = int(math.ceil(observed_max)) if observed_max > 0 else 1
    if observed_max > max_label:
        raise ParseError(0, f"label {observed_max} exceeds max_label {max_label}")

    n_groups = max(r[2] for r in rows)
    by_qid: dict = {}
    order = []
    for line_no, qid, gid, label, feats, _ in rows:
        if qid not in by_qid:
            by_qid[qid] = []
            order.append(qid)
        dense = [0.0] * dim
        for fid, val in feats.items():
            dense[fid - 1] = val
        rho = label / max_label
        item_id = f"{qid}:{len(by_qid[qid])}"
        by_qid[qid].append(Item(item_id=item_id, features=tuple(dense),
                               relevance_true=rho, relevance_observed=rho, group=gid))

    queries = tuple(QueryInstance(query_id=qid, items=tuple(by_qid[qid]), n_groups=n_groups)
                    for qid in order)
    return DatasetManifest(
        name=name or str(path),
        queries=queries,
        max_label=int(max_label),
        group_names=tuple(f"group{j}" for j in range(1, n_groups + 1)),
        minority_group=_smallest_group(queries, n_groups),
    )


def _smallest_group(queries, n_groups: int) -> int:
    counts = np.zeros(n_groups)
    for q in queries:
        counts += np.array(q.group_sizes)
    return int(np.argmin(counts)) + 1


def serialize_ranking_file(manifest: DatasetManifest, path) -> None:
    """Inverse of parse_ranking_file (labels written as label*max_label)."""
    dim = manifest.feature_dim
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for q in manifest.queries:
            for it in q.items:
                label = it.relevance_true * manifest.max_label
                parts = [repr(label), f"qid:{q.query_id}", f"gid:{it.group}"]
                for fid, val in enumerate(it.features, start=1):
                    # the final feature id declares the dimension, keep it
                    if val != 0.0 or fid == dim:
                        parts.append(f"{fid}:{val!r}")
                fh.write(" ".join(parts) + "\n")


def inject_bias(manifest: DatasetManifest, bias: BiasSpec) -> DatasetManifest:
    """Multiply observed relevance by the group's beta; true relevance untouched."""
    if len(bias.beta) != manifest.n_groups:
        raise ValueError(f"beta has {len(bias.beta)} entries, dataset has "
                         f"{manifest.n_groups} groups")
    queries = []
    for q in manifest.queries:
        items = tuple(
            replace(it, relevance_observed=bias.beta[it.group - 1] * it.relevance_true)
            for it in q.items)
        queries.append(QueryInstance(query_id=q.query_id, items=items, n_groups=q.n_groups))
    return replace(manifest, queries=tuple(queries))


def split_train_test(manifest: DatasetManifest, fraction: float, seed: int):
    """Query-level split; train gets floor(fraction * n) shuffled queries."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0,1), got {fraction}")
    n = len(manifest.queries)
    if n < 2:
        raise TooFewQueries(f"need at least 2 queries, got {n}")
    rng = derive_rng(seed, "split")
    perm = rng.permutation(n)
    n_train = max(1, min(n - 1, math.floor(fraction * n)))
    train_idx = sorted(perm[:n_train])
    test_idx = sorted(perm[n_train:])
    train = replace(manifest, name=f"{manifest.name}-train",
                    queries=tuple(manifest.queries[i] for i in train_idx))
    test = replace(manifest, name=f"{manifest.name}-test",
                   queries=tuple(manifest.queries[i] for i in test_idx))
    return train, test


def synth_generate(n_queries: int, items_per_query: int, n_groups: int,
                   proportions, feature_dim: int, seed: int,
                   name: str = "synthetic",
                   signal_scale: float = 2.0) -> DatasetManifest:
    """Synthetic ranking data for desk-scale experiments.

    Features: a noisy group indicator block (n_groups dims) plus standard
    normal signal dims. True relevance is a logistic read-out of the signal
    dims only, so all groups share the same relevance distribution and the
    only disadvantage a group can have is injected bias. Larger
    signal_scale pushes relevance toward 0/1 (more separable data).
    """
    if abs(sum(proportions) - 1.0) > 1e-9:
        raise ValueError("proportions must sum to 1")
    if feature_dim <= n_groups:
        raise ValueError(f"feature_dim must exceed n_groups={n_groups}")
    signal_dim = feature_dim - n_groups
    hidden = derive_rng(seed, "hidden-scorer").standard_normal(signal_dim)
    hidden /= np.linalg.norm(hidden)

    counts = _allocate_counts(items_per_query, proportions)
    queries = []
    for qi in range(n_queries):
        rng = derive_rng(seed, "synth-query", qi)
        items = []
        for j, cnt in enumerate(counts, start=1):
            for _ in range(cnt):
                marker = np.zeros(n_groups)
                marker[j - 1] = 1.0
                marker += 0.3 * rng.standard_normal(n_groups)
                signal = rng.standard_normal(signal_dim)
                logit = signal_scale * float(signal @ hidden) + 0.3 * rng.standard_normal()
                rho = float(np.clip(1.0 / (1.0 + np.exp(-logit)), 0.0, 1.0))
                items.append(Item(
                    item_id=f"q{qi}:{len(items)}",
                    features=tuple(float(v) for v in np.concatenate([marker, signal])),
                    relevance_true=rho,
                    relevance_observed=rho,
                    group=j,
                ))
        queries.append(QueryInstance(query_id=f"q{qi}", items=tuple(items),
                                     n_groups=n_groups))
    return DatasetManifest(
        name=name,
        queries=tuple(queries),
        max_label=1,
        group_names=tuple(f"group{j}" for j in range(1, n_groups + 1)),
        minority_group=int(np.argmin(counts)) + 1,
    )


def _allocate_counts(total: int, proportions) -> list:
    """Largest-remainder allocation of total across proportions."""
    raw = [p * total for p in proportions]
    counts = [math.floor(r) for r in raw]
    short = total - sum(counts)
    remainders = sorted(range(len(raw)), key=lambda i: raw[i] - counts[i], reverse=True)
    for i in remainders[:short]:
        counts[i] += 1
    return counts
