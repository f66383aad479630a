"""Dynamic time warping with squared local distance and the three basic moves.

A warping path runs from (0, 0) to (i-1, k-1) and advances by one of
(1, 1), (1, 0) or (0, 1) per step. The cumulative table is filled left to
right so that the returned distance equals the in-order sum of local
distances along the returned path, bit for bit.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numba as nb
import numpy as np

from .rotor import Trajectory


class BandError(ValueError):
    """Band narrower than the length difference; no warping path exists."""


@dataclass(frozen=True)
class DtwOutcome:
    distance: float
    path: tuple[tuple[int, int], ...]

    def path_cost(self, p, q) -> float:
        """Sum of local distances along ``path`` in path order."""
        p, q = _values(p), _values(q)
        total = 0.0
        for m, n in self.path:
            total += local_distance(p[m], q[n])
        return total


def local_distance(a: float, b: float) -> float:
    d = a - b
    return d * d


def distance_grid(p, q) -> np.ndarray:
    p, q = _values(p), _values(q)
    return (p[:, None] - q[None, :]) ** 2


def _values(x) -> np.ndarray:
    if isinstance(x, Trajectory):
        return x.angles
    return np.asarray(x, dtype=float)


@nb.njit(cache=True, nogil=True)
def _cumulative(p, q, band):
    ni, nk = p.shape[0], q.shape[0]
    acc = np.full((ni + 1, nk + 1), np.inf)
    acc[0, 0] = 0.0
    for m in range(1, ni + 1):
        lo, hi = 1, nk
        if band >= 0:
            lo = max(1, m - band)
            hi = min(nk, m + band)
        for n in range(lo, hi + 1):
            best = acc[m - 1, n - 1]
            up = acc[m - 1, n]
            if up < best:
                best = up
            left = acc[m, n - 1]
            if left < best:
                best = left
            d = p[m - 1] - q[n - 1]
            acc[m, n] = best + d * d
    return acc


@nb.njit(cache=True, nogil=True)
def _rolling(p, q, band):
    ni, nk = p.shape[0], q.shape[0]
    prev = np.full(nk + 1, np.inf)
    cur = np.full(nk + 1, np.inf)
    prev[0] = 0.0
    for m in range(1, ni + 1):
        cur[:] = np.inf
        lo, hi = 1, nk
        if band >= 0:
            lo = max(1, m - band)
            hi = min(nk, m + band)
        for n in range(lo, hi + 1):
            best = prev[n - 1]
            if prev[n] < best:
                best = prev[n]
            if cur[n - 1] < best:
                best = cur[n - 1]
            d = p[m - 1] - q[n - 1]
            cur[n] = best + d * d
        prev, cur = cur, prev
        prev[0] = np.inf
    return prev[nk]


def _backtrack(acc: np.ndarray) -> tuple[tuple[int, int], ...]:
    m, n = acc.shape[0] - 1, acc.shape[1] - 1
    path = [(m - 1, n - 1)]
    while (m, n) != (1, 1):
        # tie order: diagonal, then row advance, then column advance
        cands = ((m - 1, n - 1), (m - 1, n), (m, n - 1))
        best = min(acc[c] for c in cands)
        for c in cands:
            if acc[c] == best:
                m, n = c
                break
        path.append((m - 1, n - 1))
    path.reverse()
    return tuple(path)


def _check_band(ni: int, nk: int, band: int | None) -> int:
    if ni < 1 or nk < 1:
        raise ValueError("both series need at least one sample")
    if band is None:
        return -1
    if band < abs(ni - nk):
        raise BandError(f"band {band} < length difference {abs(ni - nk)}")
    return int(band)


def dtw(p, q, band: int | None = None) -> DtwOutcome:
    """Exact DTW distance and optimal path; ``band`` is a Sakoe-Chiba radius on |m - n|."""
    a, b = _values(p), _values(q)
    bw = _check_band(len(a), len(b), band)
    acc = _cumulative(a, b, bw)
    return DtwOutcome(float(acc[-1, -1]), _backtrack(acc))


def dtw_distance(p, q, band: int | None = None) -> float:
    """Distance only, in O(min(i, k)) memory."""
    a, b = _values(p), _values(q)
    if len(b) > len(a):
        a, b = b, a
    bw = _check_band(len(a), len(b), band)
    return float(_rolling(a, b, bw))


def pairwise_dtw(ts: Sequence, band: int | None = None, workers: int | None = None) -> np.ndarray:
    """Symmetric matrix of DTW distances with a zero diagonal.

    Each unordered pair is computed once. ``workers`` > 1 fans the pairs out
    over threads; the result does not depend on scheduling.
    """
    if len(ts) < 2:
        raise ValueError("need at least two trajectories")
    vals = [_values(t) for t in ts]
    n = len(vals)
    pairs = list(combinations(range(n), 2))

    def one(pq):
        i, j = pq
        return dtw_distance(vals[i], vals[j], band)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            dists = list(pool.map(one, pairs))
    else:
        dists = [one(pq) for pq in pairs]
    out = np.zeros((n, n))
    for (i, j), d in zip(pairs, dists):
        out[i, j] = out[j, i] = d
    return out
