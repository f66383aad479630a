"""Constrained spectral clustering of buses and k-medoids island allocation.

The relaxed problem minimises ``v' L_N v`` subject to ``v' Q_N v > beta`` and
``v'v = vol``. Its stationary points solve the symmetric pencil

    L_N v = lam * (Q_N - beta/vol * I) v.

``L_N`` is positive semi-definite with a null space spanned by the
``D^{1/2} 1`` vectors of the graph components. Eliminating that null space
leaves a positive-definite block, which turns the pencil into an ordinary
symmetric eigenproblem in ``theta = 1/lam``; the result is the exact
generalized eigenpairs in real arithmetic.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.sparse.csgraph import connected_components

DEFAULT_ALPHA = 0.2
MAX_SWAPS = 100


class SpectralError(ValueError):
    pass


class InfeasibleError(SpectralError):
    pass


@dataclass(frozen=True)
class SpectralSolution:
    eigenvalues: np.ndarray  # every finite generalized eigenvalue, ascending
    eigenvectors: np.ndarray  # matching columns, unit norm
    selected_values: np.ndarray  # k-1 smallest positive eigenvalues
    selected: np.ndarray  # n x (k-1), each column scaled to norm sqrt(vol)
    embedding: np.ndarray  # rows clustered by k-medoids
    assignment: np.ndarray  # island label per bus, 1..k
    beta: float
    vol: float


def _as_degrees(d) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    if d.ndim == 2:
        d = np.diag(d)
    if np.any(d <= 0):
        raise SpectralError("degree matrix must be positive on the diagonal")
    return d


def normalize_constraints(q: np.ndarray, d) -> np.ndarray:
    """``D^{-1/2} Q D^{-1/2}``; ``d`` may be the degree vector or the diagonal matrix."""
    s = 1.0 / np.sqrt(_as_degrees(d))
    qn = s[:, None] * np.asarray(q, dtype=float) * s[None, :]
    return (qn + qn.T) / 2.0


def recover_indicator(v: np.ndarray, d) -> np.ndarray:
    s = 1.0 / np.sqrt(_as_degrees(d))
    v = np.asarray(v, dtype=float)
    return v * (s[:, None] if v.ndim == 2 else s)


def default_beta(q_n: np.ndarray, vol: float, alpha: float = DEFAULT_ALPHA) -> float:
    return float(alpha * vol * np.linalg.eigvalsh((q_n + q_n.T) / 2.0)[-1])


def _fix_sign(v: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(v)))
    return -v if v[i] < 0 else v


def generalized_eigenpairs(l_n: np.ndarray, b: np.ndarray, null_dim: int | None = None):
    """Finite eigenpairs of ``l_n v = lam b v`` for PSD ``l_n``; returns (lam, V) with unit columns.

    The zero eigenvalues belonging to the null space of ``l_n`` are included.
    """
    l_n = (l_n + l_n.T) / 2.0
    b = (b + b.T) / 2.0
    n = l_n.shape[0]
    if null_dim is None:
        adj = np.abs(l_n - np.diag(np.diag(l_n))) > 0
        null_dim, _ = connected_components(adj, directed=False)
    mu, u = np.linalg.eigh(l_n)
    u0, u1, mu1 = u[:, :null_dim], u[:, null_dim:], mu[null_dim:]
    if np.any(mu1 <= 0):
        raise SpectralError("Laplacian has more null directions than graph components")
    b00 = u0.T @ b @ u0
    b01 = u0.T @ b @ u1
    b11 = u1.T @ b @ u1
    if np.linalg.cond(b00) > 1e12:
        raise SpectralError("constraint pencil is singular on the trivial subspace; adjust beta")
    schur = b11 - b01.T @ np.linalg.solve(b00, b01)
    r = 1.0 / np.sqrt(mu1)
    m = r[:, None] * schur * r[None, :]
    theta, y = np.linalg.eigh((m + m.T) / 2.0)
    scale = max(np.abs(theta).max(), 1e-300)
    keep = np.abs(theta) > 1e-12 * scale
    x = r[:, None] * y[:, keep]
    a = -np.linalg.solve(b00, b01 @ x)
    v = u0 @ a + u1 @ x
    lam = 1.0 / theta[keep]
    # trivial solutions: lam = 0 on the null space of l_n
    lam = np.concatenate([np.zeros(null_dim), lam])
    v = np.concatenate([u0, v], axis=1)
    v = v / np.linalg.norm(v, axis=0)
    order = np.argsort(lam, kind="stable")
    v = np.column_stack([_fix_sign(v[:, j]) for j in order]) if n else v
    return lam[order], v


def solve_constrained(
    l_n: np.ndarray,
    q_n: np.ndarray,
    beta: float,
    vol: float,
    k: int,
    degrees=None,
) -> SpectralSolution:
    """Eigenvectors for the constrained cut plus a k-medoids allocation.

    With ``degrees`` given, k-medoids runs on the relaxed indicators
    ``D^{-1/2} v``; otherwise on the rows of the selected ``v`` directly.
    """
    if k < 2:
        raise SpectralError("k must be at least 2")
    n = l_n.shape[0]
    lam_q = np.linalg.eigvalsh((q_n + q_n.T) / 2.0)[-1]
    if beta >= vol * lam_q:
        raise InfeasibleError(
            f"beta={beta:.6g} >= vol*lambda_max(Q_N)={vol * lam_q:.6g}: no vector satisfies the constraint"
        )
    b = q_n - (beta / vol) * np.eye(n)
    lam, vecs = generalized_eigenpairs(l_n, b)
    pos = np.flatnonzero(lam > 0)
    if pos.size < k - 1:
        raise InfeasibleError(
            f"only {pos.size} positive eigenvalues for k={k}; lower beta or k"
        )
    pick = pos[: k - 1]
    sel = vecs[:, pick] * np.sqrt(vol)
    emb = recover_indicator(sel, degrees) if degrees is not None else sel
    assignment = kmedoids_assign(emb, k)
    return SpectralSolution(lam, vecs, lam[pick], sel, emb, assignment, float(beta), float(vol))


def _pairwise(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    diff = x[:, None, :] - x[None, :, :]
    return np.sqrt((diff**2).sum(axis=-1))


def medoid_cost(dist: np.ndarray, medoids) -> float:
    return float(dist[:, list(medoids)].min(axis=1).sum())


def farthest_first(dist: np.ndarray, k: int) -> list[int]:
    med = [0]
    near = dist[0].copy()
    while len(med) < k:
        nxt = int(np.argmax(near))
        med.append(nxt)
        near = np.minimum(near, dist[nxt])
    return med


def pam(dist: np.ndarray, k: int, max_iter: int = MAX_SWAPS) -> list[int]:
    """Best-improvement swap search from a farthest-first start."""
    n = dist.shape[0]
    med = farthest_first(dist, k)
    cost = medoid_cost(dist, med)
    for _ in range(max_iter):
        best = (cost, None, None)
        for slot in range(k):
            for cand in range(n):
                if cand in med:
                    continue
                trial = med.copy()
                trial[slot] = cand
                c = medoid_cost(dist, trial)
                if c < best[0] - 1e-12 * max(abs(cost), 1.0):
                    best = (c, slot, cand)
        if best[1] is None:
            break
        cost = best[0]
        med[best[1]] = best[2]
    return med


def labels_from_medoids(dist: np.ndarray, medoids) -> np.ndarray:
    """Nearest medoid per point (lowest slot on ties), relabelled 1..k by first appearance."""
    raw = np.argmin(dist[:, list(medoids)], axis=1)
    mapping: dict[int, int] = {}
    out = np.empty(len(raw), dtype=int)
    for i, r in enumerate(raw):
        mapping.setdefault(int(r), len(mapping) + 1)
        out[i] = mapping[int(r)]
    return out


def kmedoids_assign(embedding: np.ndarray, k: int) -> np.ndarray:
    emb = np.asarray(embedding, dtype=float)
    if emb.ndim == 1:
        emb = emb[:, None]
    n = emb.shape[0]
    if not 1 <= k <= n:
        raise SpectralError(f"k={k} must lie in [1, {n}]")
    if len(np.unique(emb, axis=0)) < k:
        warnings.warn("fewer distinct embedding rows than islands; medoids coincide", stacklevel=2)
    dist = _pairwise(emb)
    return labels_from_medoids(dist, pam(dist, k))


def exhaustive_medoids(embedding: np.ndarray, k: int) -> list[int]:
    """Global optimum by enumeration; only for small n."""
    dist = _pairwise(embedding)
    return list(min(combinations(range(dist.shape[0]), k), key=lambda m: medoid_cost(dist, m)))


def partition_graph(graph, q: np.ndarray, k: int, beta: float | None = None, alpha: float = DEFAULT_ALPHA) -> SpectralSolution:
    """Full bus allocation for a PowerGraph and a bus-level constraint matrix."""
    q_n = normalize_constraints(q, graph.degrees)
    if beta is None:
        beta = default_beta(q_n, graph.vol, alpha)
    return solve_constrained(graph.laplacian_norm, q_n, beta, graph.vol, k, degrees=graph.degrees)
