"""Flow-weighted bus graph and its Laplacians."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .ingest import NetworkCase

FLOOR_WEIGHT_MW = 1e-6


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class PowerGraph:
    bus_ids: tuple[int, ...]
    weights: np.ndarray
    degrees: np.ndarray
    laplacian: np.ndarray
    laplacian_norm: np.ndarray
    vol: float

    @property
    def n_buses(self) -> int:
        return len(self.bus_ids)

    def components(self) -> tuple[int, np.ndarray]:
        return connected_components(self.weights > 0, directed=False)


def build_weights(case: NetworkCase, floor: float = FLOOR_WEIGHT_MW) -> np.ndarray:
    """Average of |P| at both branch ends; parallel circuits add, open breakers are skipped."""
    idx = case.bus_index()
    n = len(case.buses)
    w = np.zeros((n, n))
    for br in case.branches:
        if not br.breaker:
            continue
        i, j = idx[br.from_bus], idx[br.to_bus]
        wij = max(br.mean_abs_flow, floor)
        w[i, j] += wij
        w[j, i] += wij
    return w


def build_laplacians(w: np.ndarray, bus_ids=None) -> tuple[np.ndarray, np.ndarray, float]:
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise GraphError("weight matrix must be square")
    if not np.allclose(w, w.T, rtol=0, atol=0) or np.any(w < 0) or np.any(np.diag(w) != 0):
        raise GraphError("weights must be symmetric, non-negative with a zero diagonal")
    d = w.sum(axis=1)
    dead = np.flatnonzero(d <= 0)
    if dead.size:
        names = [bus_ids[i] for i in dead] if bus_ids is not None else dead.tolist()
        raise GraphError(f"isolated bus(es) {names}: remove them or close a branch")
    lap = np.diag(d) - w
    s = 1.0 / np.sqrt(d)
    lap_n = s[:, None] * lap * s[None, :]
    lap_n = (lap_n + lap_n.T) / 2.0
    return lap, lap_n, float(d.sum())


def build_graph(case: NetworkCase, floor: float = FLOOR_WEIGHT_MW) -> PowerGraph:
    w = build_weights(case, floor)
    lap, lap_n, vol = build_laplacians(w, case.bus_ids)
    return PowerGraph(tuple(case.bus_ids), w, w.sum(axis=1), lap, lap_n, vol)
