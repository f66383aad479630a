"""Coherent generator groups from a DTW distance matrix.

Grouping and the choice of k both come from one complete-linkage dendrogram.
The number of groups is the k whose cut sits in the widest gap between
consecutive merge heights.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.cluster.hierarchy import cut_tree, linkage
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import squareform

from .ingest import NetworkCase

Partition = list[tuple[str, ...]]


class CoherencyError(ValueError):
    pass


class BaselineError(CoherencyError):
    """The correlation baseline cannot be evaluated on these trajectories."""


@dataclass(frozen=True)
class CoherencyModel:
    k: int
    groups: Partition
    q_matrix: np.ndarray
    bus_ids: tuple[int, ...]


def _check_square(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise CoherencyError("distance matrix must be square")
    return m


def complete_linkage(dist: np.ndarray) -> np.ndarray:
    dist = _check_square(dist)
    sym = (dist + dist.T) / 2.0
    np.fill_diagonal(sym, 0.0)
    return linkage(squareform(sym, checks=False), method="complete")


def merge_heights(dist: np.ndarray) -> np.ndarray:
    """``h[m]`` is the height of the merge that leaves ``m`` clusters (index 0 unused)."""
    z = complete_linkage(dist)
    n = z.shape[0] + 1
    h = np.full(n, np.nan)
    for m in range(1, n):
        h[m] = z[n - m - 1, 2]
    return h


def gap_scores(dist: np.ndarray, k_max: int | None = None) -> dict[int, float]:
    """Gap score ``h[k-1] - h[k]`` for every admissible k."""
    n = _check_square(dist).shape[0]
    k_max = n - 1 if k_max is None else k_max
    if not 2 <= k_max <= n - 1:
        raise CoherencyError(f"k_max must lie in [2, {n - 1}], got {k_max}")
    h = merge_heights(dist)
    return {k: float(h[k - 1] - h[k]) for k in range(2, k_max + 1)}


def select_k(dist: np.ndarray, k_max: int | None = None) -> int:
    scores = gap_scores(dist, k_max)
    best = max(scores.values())
    if best <= 0.0:
        warnings.warn("degenerate distance matrix: no merge gap, falling back to k=2", stacklevel=2)
        return 2
    # dict preserves ascending k, so the first hit is the smallest k on ties
    return next(k for k, s in scores.items() if s == best)


def _labels_to_partition(labels: Sequence[int], gen_ids: Sequence[str]) -> Partition:
    groups: dict[int, list[str]] = {}
    for lab, gid in zip(labels, gen_ids):
        groups.setdefault(int(lab), []).append(gid)
    # order groups by their first member in input order
    return [tuple(g) for g in groups.values()]


def group_generators(dist: np.ndarray, k: int, gen_ids: Sequence[str] | None = None) -> Partition:
    dist = _check_square(dist)
    n = dist.shape[0]
    gen_ids = [f"G{i + 1}" for i in range(n)] if gen_ids is None else list(gen_ids)
    if len(gen_ids) != n:
        raise CoherencyError("gen_ids length does not match the matrix")
    if not 1 <= k <= n:
        raise CoherencyError(f"k={k} must lie in [1, {n}]")
    if k == n:
        return [(g,) for g in gen_ids]
    labels = cut_tree(complete_linkage(dist), n_clusters=k).ravel()
    return _labels_to_partition(labels, gen_ids)


def identify(dist: np.ndarray, gen_ids: Sequence[str], k: int | str = "auto", k_max: int | None = None) -> Partition:
    if k == "auto":
        k = select_k(dist, k_max)
    return group_generators(dist, int(k), gen_ids)


def build_constraints(groups: Partition, case: NetworkCase) -> np.ndarray:
    """Must-link/cannot-link matrix over all buses in case order.

    +1 between buses hosting generators of the same group, -1 across groups,
    0 elsewhere including the diagonal. Generators missing from ``groups``
    leave their bus unconstrained.
    """
    idx = case.bus_index()
    bus_of = {g.gen_id: g.bus for g in case.generators}
    label: dict[int, int] = {}
    for gi, grp in enumerate(groups):
        for gid in grp:
            if gid not in bus_of:
                raise CoherencyError(f"generator {gid} is not in the network case")
            bus = bus_of[gid]
            if bus in label and label[bus] != gi:
                raise CoherencyError(f"bus {bus} hosts generators from different groups")
            label[bus] = gi
    n = len(case.buses)
    q = np.zeros((n, n))
    items = sorted((idx[b], lab) for b, lab in label.items())
    for i, li in items:
        for j, lj in items:
            if i != j:
                q[i, j] = 1.0 if li == lj else -1.0
    return q


def coherency_model(groups: Partition, case: NetworkCase) -> CoherencyModel:
    return CoherencyModel(len(groups), list(groups), build_constraints(groups, case), tuple(case.bus_ids))


def correlation_matrix(ts: Sequence) -> np.ndarray:
    vals = [np.asarray(getattr(t, "angles", t), dtype=float) for t in ts]
    lengths = {len(v) for v in vals}
    if len(lengths) != 1:
        raise BaselineError(
            "correlation baseline needs equal-length trajectories; it cannot handle missing samples"
        )
    x = np.vstack(vals)
    flat = [getattr(t, "gen_id", str(i)) for i, t in enumerate(ts) if np.ptp(x[i]) == 0.0]
    if flat:
        raise BaselineError(f"constant trajectory has undefined correlation: {flat}")
    return np.corrcoef(x)


def correlation_baseline(ts: Sequence, gen_ids: Sequence[str] | None = None, tol: float = 1e-12) -> Partition:
    """Threshold pairwise Pearson correlation at its off-diagonal mean; groups are connected components."""
    gen_ids = [getattr(t, "gen_id", f"G{i + 1}") for i, t in enumerate(ts)] if gen_ids is None else list(gen_ids)
    r = correlation_matrix(ts)
    n = r.shape[0]
    off = r[~np.eye(n, dtype=bool)]
    thr = off.mean()
    adj = (r >= thr - tol) & ~np.eye(n, dtype=bool)
    _, labels = connected_components(adj.astype(int), directed=False)
    return _labels_to_partition(labels, gen_ids)
