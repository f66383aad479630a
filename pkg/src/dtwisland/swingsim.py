"""Classical-model transient simulation on the Kron-reduced network.

Every machine is a constant emf behind its transient reactance; loads are
constant impedances taken at the solved pre-fault voltages. Between events
the network is reduced to the machine internal nodes and the swing equations

    d(delta)/dt = w_s * w
    2H dw/dt    = Pm - Pe - D w

are integrated with fixed-step RK4. Faults add a large shunt at the faulted
point; trips remove the branch.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .ingest import NetworkCase, PmuRecord, PmuRecordSet

FAULT_ADMITTANCE = 1e6
DEFAULT_DAMPING = 0.05
EVENT_KINDS = ("three_phase_fault", "clear_fault", "trip_branch")


class ScenarioError(ValueError):
    pass


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Event:
    t: float
    kind: str
    branch: tuple[int, int] | None = None
    location: float = 0.0  # fraction along the branch from its first-listed bus
    trip: bool = False  # clear_fault only: open the faulted branch

    def as_dict(self) -> dict:
        d = {"t": self.t, "type": self.kind}
        if self.branch is not None:
            d["branch"] = list(self.branch)
        if self.kind == "three_phase_fault":
            d["location"] = self.location
        if self.kind == "clear_fault":
            d["trip"] = self.trip
        return d


@dataclass(frozen=True)
class Scenario:
    events: tuple[Event, ...]
    duration: float
    dt: float = 1e-3
    output_rate: float = 60.0
    name: str = ""
    window: tuple[float, float] | None = None
    islanding_time: float | None = None

    def __post_init__(self):
        validate_scenario(self)

    def tripped_branches(self, until: float | None = None) -> list[tuple[int, int]]:
        """Bus pairs opened by the events up to ``until`` (inclusive)."""
        out = []
        active = None
        for ev in self.events:
            if until is not None and ev.t > until:
                break
            if ev.kind == "three_phase_fault":
                active = ev.branch
            elif ev.kind == "clear_fault":
                if ev.trip:
                    out.append(active)
                active = None
            elif ev.kind == "trip_branch":
                out.append(ev.branch)
        return out

    def as_dict(self) -> dict:
        d = {
            "name": self.name,
            "duration": self.duration,
            "dt": self.dt,
            "output_rate": self.output_rate,
            "events": [e.as_dict() for e in self.events],
        }
        if self.window is not None:
            d["window"] = list(self.window)
        if self.islanding_time is not None:
            d["islanding_time"] = self.islanding_time
        return d


def validate_scenario(sc: Scenario) -> None:
    if sc.duration <= 0 or sc.dt <= 0 or sc.output_rate <= 0:
        raise ScenarioError("duration, dt and output_rate must be positive")
    if sc.dt > 1.0 / (2.0 * sc.output_rate):
        raise ScenarioError(f"dt={sc.dt} exceeds half the output interval")
    last = -math.inf
    active = False
    for ev in sc.events:
        if ev.kind not in EVENT_KINDS:
            raise ScenarioError(f"unknown event type {ev.kind!r}")
        if not 0.0 <= ev.t <= sc.duration:
            raise ScenarioError(f"event at t={ev.t} outside [0, {sc.duration}]")
        if ev.t <= last:
            raise ScenarioError("event times must be strictly increasing")
        last = ev.t
        if ev.kind == "three_phase_fault":
            if active:
                raise ScenarioError(f"fault at t={ev.t} while another fault is active")
            if ev.branch is None or not 0.0 <= ev.location <= 1.0:
                raise ScenarioError("fault needs a branch and a location in [0, 1]")
            active = True
        elif ev.kind == "clear_fault":
            if not active:
                raise ScenarioError(f"clear at t={ev.t} without an active fault")
            active = False
        elif ev.branch is None:
            raise ScenarioError("trip_branch needs a branch")
    if active:
        raise ScenarioError("fault is never cleared")


def scenario_from_dict(d: dict) -> Scenario:
    events = []
    for e in d.get("events", []):
        br = e.get("branch")
        events.append(
            Event(
                t=float(e["t"]),
                kind=e["type"],
                branch=(int(br[0]), int(br[1])) if br is not None else None,
                location=float(e.get("location", 0.0)),
                trip=bool(e.get("trip", False)),
            )
        )
    win = d.get("window")
    return Scenario(
        events=tuple(events),
        duration=float(d["duration"]),
        dt=float(d.get("dt", 1e-3)),
        output_rate=float(d.get("output_rate", 60.0)),
        name=d.get("name", ""),
        window=(float(win[0]), float(win[1])) if win is not None else None,
        islanding_time=float(d["islanding_time"]) if d.get("islanding_time") is not None else None,
    )


def load_scenario(path) -> Scenario:
    return scenario_from_dict(json.loads(Path(path).read_text()))


def write_scenario(sc: Scenario, path=None) -> str:
    text = json.dumps(sc.as_dict(), indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


# --- network algebra -----------------------------------------------------------


@dataclass
class _Topology:
    open_pairs: set = field(default_factory=set)
    fault: tuple[tuple[int, int], float] | None = None


def _branch_admittances(case: NetworkCase, topo: _Topology):
    """Yield (i, j, y_ii, y_jj, y_ij, y_ji) over bus indices, fault split included.

    The fault node, when present, has index ``len(case.buses)``.
    """
    idx = case.bus_index()
    n = len(case.buses)
    fault_pair = None
    if topo.fault is not None:
        (a, b), loc = topo.fault
        fault_pair = ((min(a, b), max(a, b)), a, loc)
    for br in case.branches:
        if not br.breaker or br.pair in topo.open_pairs:
            continue
        if br.x == 0 and br.r == 0:
            raise SimulationError(f"branch {br.label()} has no impedance data")
        z = complex(br.r, br.x)
        f, t = idx[br.from_bus], idx[br.to_bus]
        if fault_pair is not None and br.pair == fault_pair[0] and 0.0 < fault_pair[2] < 1.0:
            if br.tap != 1.0:
                raise SimulationError(f"cannot place a mid-line fault inside transformer {br.label()}")
            loc = fault_pair[2] if fault_pair[1] == br.from_bus else 1.0 - fault_pair[2]
            for end, frac in ((f, loc), (t, 1.0 - loc)):
                ys = 1.0 / (z * frac)
                sh = 0.5j * br.b * frac
                yield end, n, ys + sh, ys + sh, -ys, -ys
            continue
        ys = 1.0 / z
        sh = 0.5j * br.b
        tap = br.tap
        yield f, t, (ys + sh) / tap**2, ys + sh, -ys / tap, -ys / tap


def _network(case: NetworkCase, topo: _Topology):
    """Full bus admittance matrix with loads, shunts and the fault."""
    n = len(case.buses)
    interior = topo.fault is not None and 0.0 < topo.fault[1] < 1.0
    size = n + (1 if interior else 0)
    y = np.zeros((size, size), dtype=complex)
    for i, j, yii, yjj, yij, yji in _branch_admittances(case, topo):
        y[i, i] += yii
        y[j, j] += yjj
        y[i, j] += yij
        y[j, i] += yji
    base = case.base_mva
    for k, b in enumerate(case.buses):
        y[k, k] += complex(b.load_p, -b.load_q) / base / b.vm**2
        y[k, k] += complex(b.gs, b.bs) / base
    if topo.fault is not None:
        (a, b), loc = topo.fault
        idx = case.bus_index()
        if interior:
            node = n
        else:
            node = idx[a] if loc == 0.0 else idx[b]
        y[node, node] += FAULT_ADMITTANCE
    return y


def _check_islands(case: NetworkCase, topo: _Topology) -> None:
    idx = case.bus_index()
    n = len(case.buses)
    adj = np.zeros((n, n), dtype=bool)
    for br in case.branches:
        if br.breaker and br.pair not in topo.open_pairs:
            i, j = idx[br.from_bus], idx[br.to_bus]
            adj[i, j] = adj[j, i] = True
    ncomp, lab = connected_components(adj, directed=False)
    for c in range(ncomp):
        members = np.flatnonzero(lab == c)
        gens = [g.gen_id for g in case.generators if lab[idx[g.bus]] == c]
        has_shunt = any(
            case.buses[m].load_p or case.buses[m].load_q or case.buses[m].gs or case.buses[m].bs for m in members
        ) or any(
            br.b
            for br in case.branches
            if br.breaker and br.pair not in topo.open_pairs and lab[idx[br.from_bus]] == c
        )
        if len(gens) == 1 and not has_shunt and len(case.generators) > 1:
            raise SimulationError(f"generator {gens[0]} is islanded with no electrical path")
        if not gens and not has_shunt:
            ids = [case.buses[m].id for m in members]
            raise SimulationError(f"buses {ids} float with no generator or shunt; reduction is singular")


@dataclass(frozen=True)
class ReducedNetwork:
    y_red: np.ndarray  # machine internal nodes
    v_from_e: np.ndarray  # bus voltages = v_from_e @ E


def _check_machines(case: NetworkCase) -> None:
    for g in case.generators:
        if g.inertia_h <= 0 or g.xd_prime <= 0:
            raise SimulationError(f"generator {g.gen_id} lacks inertia or transient reactance")


def reduce_network(case: NetworkCase, topo: _Topology) -> ReducedNetwork:
    _check_machines(case)
    _check_islands(case, topo)
    ybus = _network(case, topo)
    idx = case.bus_index()
    ng = len(case.generators)
    yg = np.array([1.0 / (1j * g.xd_prime) for g in case.generators])
    gb = np.zeros((ng, ybus.shape[0]), dtype=complex)
    ybb = ybus.copy()
    for k, g in enumerate(case.generators):
        i = idx[g.bus]
        gb[k, i] = -yg[k]
        ybb[i, i] += yg[k]
    try:
        x = np.linalg.solve(ybb, gb.T)  # Ybb^-1 Ybg
    except np.linalg.LinAlgError as exc:
        raise SimulationError(f"network reduction failed: {exc}") from exc
    y_red = np.diag(yg) - gb @ x
    return ReducedNetwork(y_red, -x[: len(case.buses)])


# --- machine model -------------------------------------------------------------


@dataclass(frozen=True)
class Machines:
    gen_ids: tuple[str, ...]
    e_mag: np.ndarray
    delta0: np.ndarray
    h: np.ndarray
    damping: np.ndarray
    p_mech: np.ndarray
    w_s: float


def initial_machines(case: NetworkCase, net: ReducedNetwork, damping: float | None = None) -> Machines:
    base = case.base_mva
    idx = case.bus_index()
    e = np.empty(len(case.generators), dtype=complex)
    for k, g in enumerate(case.generators):
        if g.inertia_h <= 0 or g.xd_prime <= 0:
            raise SimulationError(f"generator {g.gen_id} lacks inertia or transient reactance")
        bus = case.buses[idx[g.bus]]
        v = bus.vm * np.exp(1j * math.radians(bus.va_deg))
        s = complex(g.dispatch, g.q_gen or 0.0) / base
        i = np.conj(s / v)
        e[k] = v + 1j * g.xd_prime * i
    pe = electrical_power(np.abs(e), np.angle(e), net.y_red)
    d = np.array(
        [g.damping if g.damping is not None else (DEFAULT_DAMPING if damping is None else damping) for g in case.generators]
    )
    return Machines(
        tuple(case.gen_ids),
        np.abs(e),
        np.angle(e),
        np.array([g.inertia_h for g in case.generators]),
        d,
        pe,
        2.0 * math.pi * case.freq_hz,
    )


def electrical_power(e_mag: np.ndarray, delta: np.ndarray, y_red: np.ndarray) -> np.ndarray:
    e = e_mag * np.exp(1j * delta)
    return np.real(e * np.conj(y_red @ e))


def derivatives(state: np.ndarray, m: Machines, y_red: np.ndarray) -> np.ndarray:
    ng = len(m.h)
    delta, w = state[:ng], state[ng:]
    pe = electrical_power(m.e_mag, delta, y_red)
    return np.concatenate([m.w_s * w, (m.p_mech - pe - m.damping * w) / (2.0 * m.h)])


def rk4_step(state: np.ndarray, h: float, m: Machines, y_red: np.ndarray) -> np.ndarray:
    k1 = derivatives(state, m, y_red)
    k2 = derivatives(state + 0.5 * h * k1, m, y_red)
    k3 = derivatives(state + 0.5 * h * k2, m, y_red)
    k4 = derivatives(state + h * k3, m, y_red)
    return state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def energy(state: np.ndarray, m: Machines, y_red: np.ndarray, ref_delta: np.ndarray | None = None) -> float:
    """Kinetic plus potential energy for a lossless reduced network (transfer conductances ignored)."""
    ng = len(m.h)
    delta, w = state[:ng], state[ng:]
    ref = m.delta0 if ref_delta is None else ref_delta
    kinetic = float(np.sum(m.h * w**2) * m.w_s)
    b = np.imag(y_red)
    g_self = np.real(np.diag(y_red))
    pot = 0.0
    for i in range(ng):
        pot -= (m.p_mech[i] - m.e_mag[i] ** 2 * g_self[i]) * (delta[i] - ref[i])
        for j in range(i + 1, ng):
            ee = m.e_mag[i] * m.e_mag[j] * b[i, j]
            pot -= ee * (math.cos(delta[i] - delta[j]) - math.cos(ref[i] - ref[j]))
    return kinetic + pot


# --- driver ----------------------------------------------------------------------


@dataclass(frozen=True)
class SimResult:
    gen_ids: tuple[str, ...]
    bus_ids: tuple[int, ...]
    times: np.ndarray
    angles: np.ndarray  # (n_gen, n_t) radians
    speeds: np.ndarray  # (n_gen, n_t) p.u. deviation
    bus_voltages: np.ndarray  # (n_bus, n_t) magnitudes p.u.
    stable: bool
    metadata: dict = field(default_factory=dict)

    def to_records(self) -> PmuRecordSet:
        return PmuRecordSet(
            {g: PmuRecord(g, self.times.copy(), angle=self.angles[k].copy()) for k, g in enumerate(self.gen_ids)}
        )

    def voltages_csv(self, path=None) -> str:
        lines = ["time_s," + ",".join(f"bus_{b}" for b in self.bus_ids)]
        for j, t in enumerate(self.times):
            lines.append(f"{t:.6f}," + ",".join(f"{v:.6f}" for v in self.bus_voltages[:, j]))
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def _topology_after(topo: _Topology, ev: Event) -> _Topology:
    new = _Topology(set(topo.open_pairs), topo.fault)
    if ev.kind == "three_phase_fault":
        new.fault = (ev.branch, ev.location)
    elif ev.kind == "clear_fault":
        if ev.trip and topo.fault is not None:
            a, b = topo.fault[0]
            new.open_pairs.add((min(a, b), max(a, b)))
        new.fault = None
    else:
        a, b = ev.branch
        new.open_pairs.add((min(a, b), max(a, b)))
    return new


def simulate(
    case: NetworkCase,
    scenario: Scenario,
    damping: float | None = None,
    stability_threshold: float = math.pi,
    dt: float | None = None,
) -> SimResult:
    """Integrate the scenario; ``dt`` overrides the scenario's internal step."""
    step = scenario.dt if dt is None else dt
    for ev in scenario.events:
        if ev.branch is not None and not case.find_branches(*ev.branch):
            raise ScenarioError(f"event at t={ev.t} names unknown branch {ev.branch}")
    topo = _Topology()
    net = reduce_network(case, topo)
    mach = initial_machines(case, net, damping)
    ng = len(mach.h)

    n_out = int(math.floor(scenario.duration * scenario.output_rate + 1e-9)) + 1
    out_t = np.arange(n_out) / scenario.output_rate
    ang = np.empty((ng, n_out))
    spd = np.empty((ng, n_out))
    volt = np.empty((len(case.buses), n_out))

    state = np.concatenate([mach.delta0, np.zeros(ng)])
    events = list(scenario.events)
    ev_i = 0
    t = 0.0

    def apply_events(now):
        nonlocal ev_i, topo, net
        changed = False
        while ev_i < len(events) and events[ev_i].t <= now + 1e-12:
            topo = _topology_after(topo, events[ev_i])
            ev_i += 1
            changed = True
        if changed:
            net = reduce_network(case, topo)

    def record(j):
        ang[:, j] = state[:ng]
        spd[:, j] = state[ng:]
        e = mach.e_mag * np.exp(1j * state[:ng])
        volt[:, j] = np.abs(net.v_from_e @ e)

    apply_events(0.0)
    record(0)
    for j in range(1, n_out):
        t_next = out_t[j]
        while t < t_next - 1e-12:
            seg_end = t_next
            if ev_i < len(events) and events[ev_i].t < seg_end - 1e-12:
                seg_end = events[ev_i].t
            span = seg_end - t
            nsub = max(1, int(math.ceil(span / step - 1e-9)))
            h = span / nsub
            for _ in range(nsub):
                state = rk4_step(state, h, mach, net.y_red)
            t = seg_end
            if not np.all(np.isfinite(state)):
                raise SimulationError(f"state diverged at t={t:.4f}s")
            apply_events(t)
        record(j)

    final = ang[:, -1]
    stable = bool(np.ptp(final) < stability_threshold)
    meta = {
        "scenario": scenario.name,
        "dt": step,
        "output_rate": scenario.output_rate,
        "damping": [float(x) for x in mach.damping],
        "model": "classical, constant-impedance loads",
    }
    return SimResult(tuple(case.gen_ids), tuple(case.bus_ids), out_t, ang, spd, volt, stable, meta)


def apply_data_loss(
    result: SimResult | PmuRecordSet,
    gens: Iterable[str],
    loss_fraction: float,
    window: tuple[float, float] | None = None,
) -> PmuRecordSet:
    """Drop the leading ``loss_fraction`` of samples for the named generators.

    With ``window`` the records are first cut to it, so the fraction refers to
    the analysis window.
    """
    if not 0.0 <= loss_fraction < 1.0:
        raise ValueError("loss_fraction must lie in [0, 1)")
    recs = result.to_records() if isinstance(result, SimResult) else result
    if window is not None:
        recs = recs.window(*window)
    gens = set(gens)
    unknown = gens - set(recs.gen_ids)
    if unknown:
        raise KeyError(f"unknown generators {sorted(unknown)}")
    out = {}
    for gid in recs.gen_ids:
        rec = recs[gid]
        if gid in gens:
            drop = int(round(loss_fraction * len(rec)))
            mask = np.arange(len(rec)) >= drop
            rec = rec.slice(mask)
        out[gid] = rec
    return PmuRecordSet(out)


def with_damping(case: NetworkCase, d: float) -> NetworkCase:
    return replace(case, generators=tuple(replace(g, damping=d) for g in case.generators))


def equilibrium_mismatch(case: NetworkCase) -> np.ndarray:
    """Pe at the initial state minus scheduled dispatch, p.u.; near zero for a consistent case."""
    net = reduce_network(case, _Topology())
    m = initial_machines(case, net)
    return m.p_mech - np.array([g.dispatch for g in case.generators]) / case.base_mva


def branch_labels(pairs: Sequence[tuple[int, int]]) -> list[str]:
    return [f"{a}-{b}" for a, b in pairs]
