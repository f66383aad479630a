"""Rotor-angle estimation from terminal phasors and trajectory preprocessing."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .ingest import NetworkCase, PmuRecord, PmuRecordSet

ANGLE_MODES = ("absolute", "deviation", "coi")


class UnobservableSample(ValueError):
    """Terminal voltage is zero, so the internal emf angle is undefined."""


class PreprocessError(ValueError):
    pass


@dataclass(frozen=True)
class Trajectory:
    gen_id: str
    t0: float
    dt: float
    angles: np.ndarray  # radians, unwrapped

    def __post_init__(self):
        a = np.asarray(self.angles, dtype=float)
        if a.ndim != 1 or len(a) < 2:
            raise PreprocessError(f"trajectory {self.gen_id} needs at least 2 samples")
        object.__setattr__(self, "angles", a)

    def __len__(self) -> int:
        return len(self.angles)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.angles))

    def scaled(self, c: float) -> "Trajectory":
        return Trajectory(self.gen_id, self.t0, self.dt, self.angles * c)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.gen_id == other.gen_id
            and self.t0 == other.t0
            and self.dt == other.dt
            and np.array_equal(self.angles, other.angles)
        )

    __hash__ = None


def estimate_rotor_angle(v_phasor, i_phasor, xd_prime: float):
    """Angle of E = V + j X'd I, the classical-model internal emf.

    Works elementwise on arrays. A zero terminal voltage raises
    ``UnobservableSample`` for scalars; for arrays those entries become NaN.
    """
    v = np.asarray(v_phasor, dtype=complex)
    i = np.asarray(i_phasor, dtype=complex)
    dead = np.abs(v) == 0
    if v.ndim == 0:
        if dead:
            raise UnobservableSample("zero terminal voltage")
        return float(np.angle(v + 1j * xd_prime * i))
    out = np.angle(v + 1j * xd_prime * i)
    out[dead] = np.nan
    return out


def record_angles(rec: PmuRecord, xd_prime: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """(times, radians) for one record, estimating from phasors if needed.

    Unobservable samples are dropped.
    """
    if rec.angle is not None:
        return rec.times, np.asarray(rec.angle, dtype=float)
    if xd_prime is None:
        raise PreprocessError(f"{rec.gen_id}: phasor record needs the generator's x'd")
    ang = estimate_rotor_angle(rec.voltage, rec.current, xd_prime)
    ok = np.isfinite(ang)
    if not ok.all():
        warnings.warn(f"{rec.gen_id}: dropped {int((~ok).sum())} unobservable samples", stacklevel=2)
    return rec.times[ok], ang[ok]


def infer_dt(records: PmuRecordSet) -> float:
    steps = [np.diff(r.times) for r in records if len(r) >= 2]
    if not steps:
        raise PreprocessError("no record has two samples; cannot infer a sample interval")
    return float(np.median(np.concatenate(steps)))


def preprocess(
    raw: PmuRecordSet,
    mode: str = "deviation",
    *,
    case: NetworkCase | None = None,
    inertia: Mapping[str, float] | None = None,
    dt: float | None = None,
    window: tuple[float | None, float | None] | None = None,
) -> list[Trajectory]:
    """Unwrap, resample onto a common grid and reference the angles.

    The grid is ``T0 + n*dt`` with ``T0`` the earliest sample time across all
    records. Each record keeps its own span on that grid, so a missing prefix
    stays missing. ``deviation`` subtracts each record's first resampled value;
    ``coi`` then removes the inertia-weighted mean over whichever generators
    have data at each grid time.
    """
    if mode not in ANGLE_MODES:
        raise ValueError(f"mode must be one of {ANGLE_MODES}, got {mode!r}")
    if window is not None:
        raw = raw.window(*window)
    xdp = {g.gen_id: g.xd_prime for g in case.generators} if case is not None else {}
    if mode == "coi" and inertia is None:
        if case is None:
            raise PreprocessError("coi mode needs generator inertias (pass case= or inertia=)")
        inertia = {g.gen_id: g.inertia_h for g in case.generators}

    series = {}
    for rec in raw:
        t, a = record_angles(rec, xdp.get(rec.gen_id))
        if len(t) < 2:
            raise PreprocessError(f"{rec.gen_id}: fewer than 2 samples")
        series[rec.gen_id] = (t, np.unwrap(a))
    if not series:
        raise PreprocessError("no records")
    if dt is None:
        dt = infer_dt(PmuRecordSet({g: PmuRecord(g, t, angle=a) for g, (t, a) in series.items()}))
    t_origin = min(t[0] for t, _ in series.values())
    tol = 1e-6 * dt

    grid_idx = {}
    out = {}
    for gid, (t, a) in series.items():
        first = int(np.ceil((t[0] - t_origin - tol) / dt))
        last = int(np.floor((t[-1] - t_origin + tol) / dt))
        if last - first + 1 < 2:
            raise PreprocessError(f"{gid}: fewer than 2 samples after resampling at dt={dt:g}")
        n = np.arange(first, last + 1)
        tg = t_origin + n * dt
        vals = np.interp(np.clip(tg, t[0], t[-1]), t, a)
        if mode in ("deviation", "coi"):
            vals = vals - vals[0]
        grid_idx[gid] = n
        out[gid] = vals

    if mode == "coi":
        out = _subtract_coi(out, grid_idx, inertia)

    return [Trajectory(gid, float(t_origin + grid_idx[gid][0] * dt), float(dt), out[gid]) for gid in out]


def _subtract_coi(values, grid_idx, inertia) -> dict:
    lo = min(n[0] for n in grid_idx.values())
    hi = max(n[-1] for n in grid_idx.values())
    num = np.zeros(hi - lo + 1)
    den = np.zeros(hi - lo + 1)
    for gid, v in values.items():
        h = float(inertia[gid])
        sl = grid_idx[gid] - lo
        num[sl] += h * v
        den[sl] += h
    coi = num / den
    return {gid: v - coi[grid_idx[gid] - lo] for gid, v in values.items()}


def trajectories_to_records(ts: Sequence[Trajectory]) -> PmuRecordSet:
    return PmuRecordSet({t.gen_id: PmuRecord(t.gen_id, t.times, angle=t.angles.copy()) for t in ts})
