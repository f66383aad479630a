"""Islanding plans: cut-set, flow disruption, connectivity repair and island balances."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .ingest import Branch, NetworkCase


class IslandingError(ValueError):
    pass


Assignment = dict[int, int]  # bus id -> island label


@dataclass(frozen=True)
class IslandReport:
    island: int
    buses: tuple[int, ...]
    generators: tuple[str, ...]
    gen_capacity_mw: float
    gen_dispatch_mw: float
    load_mw: float
    q_min_mvar: float
    q_max_mvar: float
    load_q_mvar: float
    load_shed_mw: float
    imbalance_mw: float

    def as_dict(self) -> dict:
        return {
            "island": self.island,
            "buses": list(self.buses),
            "generators": list(self.generators),
            "gen_capacity_mw": self.gen_capacity_mw,
            "gen_dispatch_mw": self.gen_dispatch_mw,
            "load_mw": self.load_mw,
            "q_min_mvar": self.q_min_mvar,
            "q_max_mvar": self.q_max_mvar,
            "load_q_mvar": self.load_q_mvar,
            "load_shed_mw": self.load_shed_mw,
            "imbalance_mw": self.imbalance_mw,
        }


@dataclass(frozen=True)
class IslandingPlan:
    assignment: Assignment
    cutset: tuple[Branch, ...]
    disruption_mw: float
    islands: tuple[IslandReport, ...]
    dispatch_imbalance_mw: float
    metadata: dict = field(default_factory=dict)

    @property
    def n_islands(self) -> int:
        return len(self.islands)

    @property
    def load_shed_mw(self) -> float:
        return float(sum(r.load_shed_mw for r in self.islands))

    def island_of(self, bus: int) -> int:
        return self.assignment[bus]

    def as_dict(self) -> dict:
        return {
            "n_islands": self.n_islands,
            "assignment": {str(b): isl for b, isl in sorted(self.assignment.items())},
            "islands_buses": {str(r.island): list(r.buses) for r in self.islands},
            "cutset": [
                {"from": br.from_bus, "to": br.to_bus, "circuit": br.circuit, "flow_mw": br.mean_abs_flow}
                for br in self.cutset
            ],
            "disruption_mw": self.disruption_mw,
            "load_shed_mw": self.load_shed_mw,
            "dispatch_imbalance_mw": self.dispatch_imbalance_mw,
            "islands": [r.as_dict() for r in self.islands],
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(
            ["island", "p_gen_capacity_pu", "p_load_pu", "q_gen_max_pu", "q_gen_min_pu", "q_load_pu", "load_shed_mw", "imbalance_mw"]
        )
        base = self.metadata.get("base_mva", 100.0)
        for r in self.islands:
            w.writerow(
                [
                    r.island,
                    f"{r.gen_capacity_mw / base:.4f}",
                    f"{r.load_mw / base:.4f}",
                    f"{r.q_max_mvar / base:.4f}",
                    f"{r.q_min_mvar / base:.4f}",
                    f"{r.load_q_mvar / base:.4f}",
                    f"{r.load_shed_mw:.2f}",
                    f"{r.imbalance_mw:.2f}",
                ]
            )
        w.writerow([])
        w.writerow(["lines_cut", len(self.cutset)])
        w.writerow(["islands_formed", self.n_islands])
        w.writerow(["dispatch_imbalance_mw", f"{self.dispatch_imbalance_mw:.2f}"])
        w.writerow(["load_shed_mw", f"{self.load_shed_mw:.2f}"])
        w.writerow(["disruption_mw", f"{self.disruption_mw:.2f}"])
        return buf.getvalue()


def _check_total(assignment: Mapping[int, int], case: NetworkCase) -> None:
    missing = [b for b in case.bus_ids if b not in assignment]
    if missing:
        raise IslandingError(f"assignment misses buses {missing}")


def extract_cutset(assignment: Mapping[int, int], case: NetworkCase) -> tuple[tuple[Branch, ...], float]:
    """Closed branches whose ends sit in different islands, in case order, and their disruption."""
    _check_total(assignment, case)
    cut = tuple(br for br in case.branches if br.breaker and assignment[br.from_bus] != assignment[br.to_bus])
    total = 0.0
    for br in cut:
        total += br.mean_abs_flow
    return cut, total


def disruption(assignment: Mapping[int, int], case: NetworkCase) -> float:
    return extract_cutset(assignment, case)[1]


def _island_components(assignment: Mapping[int, int], case: NetworkCase) -> list[list[int]]:
    """Connected pieces of every island, each a list of bus ids."""
    idx = case.bus_index()
    n = len(case.buses)
    adj = np.zeros((n, n), dtype=bool)
    for br in case.branches:
        if br.breaker and assignment[br.from_bus] == assignment[br.to_bus]:
            i, j = idx[br.from_bus], idx[br.to_bus]
            adj[i, j] = adj[j, i] = True
    _, labels = connected_components(adj, directed=False)
    pieces: dict[int, list[int]] = {}
    for b in case.bus_ids:
        pieces.setdefault(int(labels[idx[b]]), []).append(b)
    return list(pieces.values())


def is_connected(assignment: Mapping[int, int], case: NetworkCase) -> bool:
    return len(_island_components(assignment, case)) == len(set(assignment.values()))


def _violates(assignment: Mapping[int, int], gen_buses: Sequence[int], q: np.ndarray | None, idx) -> bool:
    if q is None:
        return False
    for a in gen_buses:
        for b in gen_buses:
            if a == b:
                continue
            qv = q[idx[a], idx[b]]
            same = assignment[a] == assignment[b]
            if (qv > 0 and not same) or (qv < 0 and same):
                return True
    return False


def repair_connectivity(
    assignment: Mapping[int, int], case: NetworkCase, q_matrix: np.ndarray | None = None
) -> Assignment:
    """Move stranded fragments into a neighbouring island.

    In each island the piece holding generators (else the largest, else the
    one with the lowest bus id) stays. Every other piece joins the adjacent
    island that adds the least disruption, lowest label on ties. A piece with
    generators may only move if the constraint matrix stays satisfied.
    """
    _check_total(assignment, case)
    out = {b: assignment[b] for b in case.bus_ids}
    idx = case.bus_index()
    gen_buses = sorted({g.bus for g in case.generators})
    for _ in range(len(case.buses)):
        pieces = _island_components(out, case)
        by_island: dict[int, list[list[int]]] = {}
        for p in pieces:
            by_island.setdefault(out[p[0]], []).append(p)
        stray = []
        for isl, ps in sorted(by_island.items()):
            if len(ps) < 2:
                continue
            keep = max(ps, key=lambda p: (sum(b in gen_buses for b in p) > 0, len(p), -min(p)))
            stray.extend(p for p in ps if p is not keep)
        if not stray:
            return out
        frag = min(stray, key=lambda p: (len(p), min(p)))
        members = set(frag)
        neighbours = sorted(
            {
                out[other]
                for br in case.branches
                if br.breaker
                for here, other in ((br.from_bus, br.to_bus), (br.to_bus, br.from_bus))
                if here in members and other not in members
            }
        )
        if not neighbours:
            raise IslandingError(f"buses {sorted(frag)} have no closed branch to any other island")
        options = []
        for isl in neighbours:
            trial = dict(out)
            for b in frag:
                trial[b] = isl
            if any(b in gen_buses for b in frag) and _violates(trial, gen_buses, q_matrix, idx):
                continue
            options.append((disruption(trial, case), isl, trial))
        if not options:
            raise IslandingError(
                f"fragment {sorted(frag)} hosts generators and cannot move without breaking coherency constraints"
            )
        out = min(options, key=lambda o: (o[0], o[1]))[2]
    raise IslandingError("connectivity repair did not converge")


def balance_report(assignment: Mapping[int, int], case: NetworkCase) -> tuple[IslandReport, ...]:
    _check_total(assignment, case)
    reports = []
    for isl in sorted(set(assignment.values())):
        buses = tuple(b for b in case.bus_ids if assignment[b] == isl)
        bset = set(buses)
        gens = [g for g in case.generators if g.bus in bset]
        cap = float(sum(g.p_capacity for g in gens))
        disp = float(sum(g.dispatch for g in gens))
        load = float(sum(b.load_p for b in case.buses if b.id in bset))
        load_q = float(sum(b.load_q for b in case.buses if b.id in bset))
        reports.append(
            IslandReport(
                island=int(isl),
                buses=buses,
                generators=tuple(g.gen_id for g in gens),
                gen_capacity_mw=cap,
                gen_dispatch_mw=disp,
                load_mw=load,
                q_min_mvar=float(sum(g.q_min for g in gens)),
                q_max_mvar=float(sum(g.q_max for g in gens)),
                load_q_mvar=load_q,
                load_shed_mw=max(0.0, load - cap),
                imbalance_mw=abs(cap - load),
            )
        )
    return tuple(reports)


def check_coherency(assignment: Mapping[int, int], case: NetworkCase, groups) -> None:
    """Raise unless every group shares one island and different groups never do."""
    bus_of = {g.gen_id: g.bus for g in case.generators}
    island_of_group = []
    for grp in groups:
        isl = {assignment[bus_of[g]] for g in grp}
        if len(isl) != 1:
            raise IslandingError(f"coherent group {list(grp)} is split over islands {sorted(isl)}")
        island_of_group.append(isl.pop())
    if len(set(island_of_group)) != len(island_of_group):
        raise IslandingError("two coherent groups were placed in the same island")


def build_plan(
    assignment: Mapping[int, int],
    case: NetworkCase,
    groups=None,
    q_matrix: np.ndarray | None = None,
    repair: bool = True,
    metadata: dict | None = None,
) -> IslandingPlan:
    assignment = {int(b): int(i) for b, i in assignment.items()}
    if repair:
        assignment = repair_connectivity(assignment, case, q_matrix)
    if groups is not None:
        check_coherency(assignment, case, groups)
    cut, dis = extract_cutset(assignment, case)
    reports = balance_report(assignment, case)
    load_total = {r.island: r.load_mw for r in reports}
    imb = float(sum(abs(r.gen_dispatch_mw - load_total[r.island]) for r in reports))
    meta = {"base_mva": case.base_mva}
    meta.update(metadata or {})
    return IslandingPlan(assignment, cut, dis, reports, imb, meta)


def assignment_from_labels(labels: Sequence[int], case: NetworkCase) -> Assignment:
    return {b: int(l) for b, l in zip(case.bus_ids, labels)}
