"""End-to-end islanding pipeline: rotor angles to an islanding plan.

Stages run in order rotor -> dtw -> coherency -> netgraph -> spectral ->
islanding. Every stage writes its output so the next one can be rerun from
disk alone.
"""

from __future__ import annotations

import csv
import io
import json
import platform
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import coherency, dtw, ingest, islanding, netgraph, rotor, spectral, swingsim


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    network: Path | None = None
    pmu: Path | None = None
    scenario: Path | None = None
    angle_mode: str = "deviation"
    band: int | None = None
    k: int | str = "auto"
    beta: float | None = None
    alpha: float = spectral.DEFAULT_ALPHA
    groups: tuple[tuple[str, ...], ...] | None = None
    window: tuple[float, float] | None = None
    open_branches: tuple[tuple[int, int], ...] = ()
    dt: float | None = None  # resampling interval of the angle traces
    sim_dt: float | None = None  # integrator step override
    workers: int | None = None
    out_dir: Path | None = None
    deterministic: bool = True  # no stochastic stage exists; kept for the record

    def __post_init__(self):
        validate_config(self)


def validate_config(cfg: RunConfig) -> None:
    for name in ("network", "pmu", "scenario"):
        p = getattr(cfg, name)
        if p is not None and not Path(p).exists():
            raise ConfigError(f"{name} file {p} does not exist")
    if cfg.angle_mode not in rotor.ANGLE_MODES:
        raise ConfigError(f"angle_mode must be one of {rotor.ANGLE_MODES}")
    if cfg.k != "auto":
        if not isinstance(cfg.k, int) or isinstance(cfg.k, bool) or cfg.k < 2:
            raise ConfigError(f"k must be 'auto' or an integer >= 2, got {cfg.k!r}")
    if cfg.band is not None and cfg.band < 0:
        raise ConfigError("band must be non-negative")
    if cfg.window is not None and cfg.window[0] >= cfg.window[1]:
        raise ConfigError("window start must precede its end")
    if cfg.groups is not None:
        if len(cfg.groups) < 2:
            raise ConfigError("a groups override needs at least two groups")
        seen = [g for grp in cfg.groups for g in grp]
        if len(seen) != len(set(seen)):
            raise ConfigError("a generator appears in two groups")
    if not 0.0 < cfg.alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")


# --- parsing helpers shared with the command line ------------------------------


def parse_groups(text: str) -> tuple[tuple[str, ...], ...]:
    """``"G1,G8,G9;G2,G3"`` -> ``(("G1","G8","G9"), ("G2","G3"))``."""
    groups = tuple(tuple(g.strip() for g in part.split(",") if g.strip()) for part in text.split(";") if part.strip())
    if any(not grp for grp in groups):
        raise ConfigError(f"empty group in {text!r}")
    return groups


def format_groups(groups) -> str:
    return ";".join(",".join(g) for g in groups)


def parse_pairs(text: str) -> tuple[tuple[int, int], ...]:
    """``"16-17,1-2"`` -> ``((16, 17), (1, 2))``."""
    out = []
    for item in text.replace(";", ",").split(","):
        item = item.strip()
        if not item:
            continue
        try:
            a, b = item.split("-")
            out.append((int(a), int(b)))
        except ValueError:
            raise ConfigError(f"branch {item!r} is not of the form FROM-TO") from None
    return tuple(out)


def parse_window(text: str) -> tuple[float, float]:
    parts = text.replace(":", ",").split(",")
    if len(parts) != 2:
        raise ConfigError(f"window {text!r} must be START,END")
    return float(parts[0]), float(parts[1])


def read_config_file(path) -> dict[str, str]:
    """Plain ``key = value`` lines; ``#`` starts a comment, dashes and underscores are interchangeable."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, val = line.split("=", 1)
        out[key.strip().replace("-", "_")] = val.strip()
    return out


_CONVERT = {
    "network": Path,
    "pmu": Path,
    "scenario": Path,
    "out_dir": Path,
    "angle_mode": str,
    "band": int,
    "k": lambda s: s if s == "auto" else int(s),
    "beta": float,
    "alpha": float,
    "groups": parse_groups,
    "window": parse_window,
    "open_branches": parse_pairs,
    "dt": float,
    "sim_dt": float,
    "workers": int,
    "deterministic": lambda s: s.lower() in ("1", "true", "yes", "on"),
}


def config_from_mapping(values: dict) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    kw = {}
    for key, val in values.items():
        if val is None:
            continue
        kw[key] = _CONVERT[key](val) if isinstance(val, str) else val
    return RunConfig(**kw)


# --- stages --------------------------------------------------------------------


@dataclass
class Inputs:
    case: ingest.NetworkCase
    scenario: swingsim.Scenario | None
    records: ingest.PmuRecordSet | None
    sim: swingsim.SimResult | None = None


def load_inputs(cfg: RunConfig) -> Inputs:
    case = ingest.load_network_case(cfg.network or ingest.bundled_case_path())
    sc = swingsim.load_scenario(cfg.scenario) if cfg.scenario is not None else None
    records, sim = None, None
    if cfg.pmu is not None:
        records = ingest.load_pmu_records(cfg.pmu)
    elif sc is not None:
        sim = swingsim.simulate(case, sc, dt=cfg.sim_dt)
        records = sim.to_records()
    return Inputs(case, sc, records, sim)


def analysis_window(cfg: RunConfig, sc: swingsim.Scenario | None):
    if cfg.window is not None:
        return cfg.window
    return sc.window if sc is not None else None


def trajectories(records, case, cfg: RunConfig, sc=None) -> list[rotor.Trajectory]:
    return rotor.preprocess(records, cfg.angle_mode, case=case, dt=cfg.dt, window=analysis_window(cfg, sc))


@dataclass(frozen=True)
class Identification:
    gen_ids: tuple[str, ...]
    distances: np.ndarray
    gap_scores: dict[int, float]
    k: int
    groups: list[tuple[str, ...]]

    def as_dict(self) -> dict:
        return {
            "gen_ids": list(self.gen_ids),
            "k": self.k,
            "groups": [list(g) for g in self.groups],
            "gap_scores": {str(k): v for k, v in self.gap_scores.items()},
        }


def identify_groups(ts: Sequence[rotor.Trajectory], k="auto", band=None, workers=None) -> Identification:
    gen_ids = tuple(t.gen_id for t in ts)
    dist = dtw.pairwise_dtw(ts, band, workers)
    scores = coherency.gap_scores(dist) if len(ts) > 2 else {}
    if k == "auto":
        k = coherency.select_k(dist) if len(ts) > 2 else 2
    groups = coherency.group_generators(dist, int(k), gen_ids)
    return Identification(gen_ids, dist, scores, int(k), groups)


def grid_case(case: ingest.NetworkCase, cfg: RunConfig, sc: swingsim.Scenario | None) -> ingest.NetworkCase:
    """The network as it stands at the islanding instant: scenario trips plus explicit open branches."""
    pairs = list(cfg.open_branches)
    if sc is not None:
        pairs.extend(sc.tripped_branches(sc.islanding_time))
    return case.with_open_branches(pairs) if pairs else case


def partition(graph, q, k, beta=None, alpha=spectral.DEFAULT_ALPHA) -> spectral.SpectralSolution:
    return spectral.partition_graph(graph, q, k, beta=beta, alpha=alpha)


def make_plan(sol, case, groups, q, metadata=None) -> islanding.IslandingPlan:
    assignment = islanding.assignment_from_labels(sol.assignment, case)
    return islanding.build_plan(assignment, case, groups, q, metadata=metadata)


@dataclass
class PipelineResult:
    config: RunConfig
    case: ingest.NetworkCase  # topology used for the graph
    plan: islanding.IslandingPlan
    groups: list[tuple[str, ...]]
    q: np.ndarray
    graph: netgraph.PowerGraph
    solution: spectral.SpectralSolution
    identification: Identification | None = None
    trajectories: list[rotor.Trajectory] = field(default_factory=list)
    sim: swingsim.SimResult | None = None


def _plan_metadata(cfg: RunConfig, sc, k: int, groups, beta: float, open_pairs, ident) -> dict:
    return {
        "angle_mode": cfg.angle_mode,
        "band": cfg.band,
        "k": k,
        "k_source": "override" if cfg.groups is not None else ("auto" if cfg.k == "auto" else "fixed"),
        "groups": [list(g) for g in groups],
        "beta": beta,
        "alpha": cfg.alpha if cfg.beta is None else None,
        "window": list(analysis_window(cfg, sc)) if analysis_window(cfg, sc) is not None else None,
        "open_branches": [list(p) for p in open_pairs],
        "scenario": sc.name if sc is not None else None,
        "identified_groups": [list(g) for g in ident.groups] if ident is not None else None,
        "imbalance_definition": "sum over islands of |pre-fault dispatch - load|",
        "load_shed_definition": "max(0, load - generation capacity) per island",
    }


def run_pipeline(cfg: RunConfig, inputs: Inputs | None = None) -> PipelineResult:
    inputs = inputs or load_inputs(cfg)
    case, sc = inputs.case, inputs.scenario

    ts, ident = [], None
    if inputs.records is not None:
        ts = trajectories(inputs.records, case, cfg, sc)
        k_id = cfg.k if cfg.groups is None else len(cfg.groups)
        ident = identify_groups(ts, k_id, cfg.band, cfg.workers)
    if cfg.groups is not None:
        if cfg.k != "auto" and cfg.k != len(cfg.groups):
            raise ConfigError(f"k={cfg.k} contradicts the {len(cfg.groups)} supplied groups")
        groups = [tuple(g) for g in cfg.groups]
    elif ident is not None:
        groups = ident.groups
    else:
        raise ConfigError("no PMU data or scenario to identify groups from; pass groups explicitly")

    grid = grid_case(case, cfg, sc)
    q = coherency.build_constraints(groups, grid)
    graph = netgraph.build_graph(grid)
    k = len(groups)
    sol = partition(graph, q, k, cfg.beta, cfg.alpha)
    open_pairs = sorted(br.pair for br in grid.branches if not br.breaker)
    meta = _plan_metadata(cfg, sc, k, groups, sol.beta, open_pairs, ident)
    plan = make_plan(sol, grid, groups, q, meta)
    res = PipelineResult(cfg, grid, plan, groups, q, graph, sol, ident, ts, inputs.sim)
    if cfg.out_dir is not None:
        write_artifacts(res, Path(cfg.out_dir))
    return res


# --- artifacts -----------------------------------------------------------------


def matrix_csv(m: np.ndarray, labels: Sequence) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([""] + [str(x) for x in labels])
    for lab, row in zip(labels, np.asarray(m)):
        w.writerow([str(lab)] + [repr(float(x)) for x in row])
    return buf.getvalue()


def traces_csv(ts: Sequence[rotor.Trajectory], groups=None) -> str:
    """Long-format angle traces in degrees, tagged with the group each generator joined."""
    group_of = {g: i + 1 for i, grp in enumerate(groups or []) for g in grp}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time_s", "gen_id", "group", "angle_deg"])
    for t in ts:
        for tt, a in zip(t.times, t.angles):
            w.writerow([f"{tt:.6f}", t.gen_id, group_of.get(t.gen_id, ""), f"{np.degrees(a):.6f}"])
    return buf.getvalue()


def spectral_dict(sol: spectral.SpectralSolution, bus_ids) -> dict:
    return {
        "beta": sol.beta,
        "vol": sol.vol,
        "eigenvalues": [float(x) for x in sol.eigenvalues],
        "selected_eigenvalues": [float(x) for x in sol.selected_values],
        "selected_eigenvectors": {str(b): [float(x) for x in row] for b, row in zip(bus_ids, sol.selected)},
        "assignment": {str(b): int(a) for b, a in zip(bus_ids, sol.assignment)},
    }


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_artifacts(res: PipelineResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    bus_ids = res.graph.bus_ids
    (out / "plan.json").write_text(res.plan.to_json())
    (out / "plan_summary.csv").write_text(res.plan.summary_csv())
    (out / "q.csv").write_text(matrix_csv(res.q, bus_ids))
    (out / "weights.csv").write_text(matrix_csv(res.graph.weights, bus_ids))
    (out / "laplacian.csv").write_text(matrix_csv(res.graph.laplacian, bus_ids))
    (out / "laplacian_norm.csv").write_text(matrix_csv(res.graph.laplacian_norm, bus_ids))
    (out / "spectral.json").write_text(_dump(spectral_dict(res.solution, bus_ids)))
    coh = {"groups": [list(g) for g in res.groups], "k": len(res.groups)}
    if res.identification is not None:
        coh["identified"] = res.identification.as_dict()
        (out / "dtw_matrix.csv").write_text(matrix_csv(res.identification.distances, res.identification.gen_ids))
    (out / "coherency.json").write_text(_dump(coh))
    if res.trajectories:
        (out / "angles.csv").write_text(traces_csv(res.trajectories, res.groups))
    if res.sim is not None:
        ingest.write_pmu_records(res.sim.to_records(), out / "pmu.csv", decimals=9)
        res.sim.voltages_csv(out / "voltages.csv")
    cfg = {k: (str(v) if isinstance(v, Path) else v) for k, v in asdict(res.config).items()}
    meta = {
        "created_unix": time.time(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "config": cfg,
        "simulation": res.sim.metadata if res.sim is not None else None,
    }
    (out / "run_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")


# --- baseline comparison -------------------------------------------------------


@dataclass(frozen=True)
class ComparisonRow:
    method: str
    groups: list[tuple[str, ...]] | None
    lines_cut: int | None
    islands: int | None
    imbalance_mw: float | None
    load_shed_mw: float | None
    disruption_mw: float | None
    note: str = ""


def _row(method: str, plan: islanding.IslandingPlan, groups, note: str = "") -> ComparisonRow:
    return ComparisonRow(
        method,
        [tuple(g) for g in groups],
        len(plan.cutset),
        plan.n_islands,
        plan.dispatch_imbalance_mw,
        plan.load_shed_mw,
        plan.disruption_mw,
        note,
    )


def compare_baseline(cfg: RunConfig, inputs: Inputs | None = None) -> list[ComparisonRow]:
    """Proposed pipeline vs the correlation-threshold grouping on the same trajectories."""
    inputs = inputs or load_inputs(cfg)
    res = run_pipeline(replace(cfg, out_dir=None), inputs)
    rows = [_row("proposed", res.plan, res.groups)]
    if not res.trajectories:
        rows.append(ComparisonRow("correlation", None, None, None, None, None, None, "no trajectories available"))
    else:
        try:
            base_groups = coherency.correlation_baseline(res.trajectories)
        except coherency.BaselineError as exc:
            rows.append(ComparisonRow("correlation", None, None, None, None, None, None, f"baseline limitation: {exc}"))
        else:
            if len(base_groups) < 2:
                rows.append(ComparisonRow("correlation", base_groups, None, 1, None, None, None, "single group: no islanding"))
            else:
                q = coherency.build_constraints(base_groups, res.case)
                try:
                    sol = partition(res.graph, q, len(base_groups), cfg.beta, cfg.alpha)
                    plan = make_plan(sol, res.case, base_groups, q)
                    rows.append(_row("correlation", plan, base_groups))
                except (spectral.SpectralError, islanding.IslandingError) as exc:
                    rows.append(ComparisonRow("correlation", base_groups, None, None, None, None, None, f"no plan: {exc}"))
    rows.append(
        ComparisonRow("community_detection", None, None, None, None, None, None, "not implemented; column intentionally absent")
    )
    return rows


def comparison_csv(rows: Sequence[ComparisonRow]) -> str:
    """Metric rows, one column per method; methods without a plan are listed in the notes."""
    shown = [r for r in rows if r.lines_cut is not None]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric"] + [r.method for r in shown])

    def fmt(x, spec):
        return "" if x is None else format(x, spec)

    w.writerow(["lines_cut"] + [fmt(r.lines_cut, "d") for r in shown])
    w.writerow(["islands_formed"] + [fmt(r.islands, "d") for r in shown])
    w.writerow(["imbalance_mw"] + [fmt(r.imbalance_mw, ".2f") for r in shown])
    w.writerow(["load_shed_mw"] + [fmt(r.load_shed_mw, ".2f") for r in shown])
    w.writerow(["disruption_mw"] + [fmt(r.disruption_mw, ".2f") for r in shown])
    w.writerow(["groups"] + [format_groups(r.groups) for r in shown])
    for r in rows:
        if r.note:
            w.writerow([f"note:{r.method}", r.note])
    return buf.getvalue()
