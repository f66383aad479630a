"""Command line front end: ``dtwisland <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import coherency, dtw, ingest, islanding, netgraph, pipeline, rotor, spectral, swingsim

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_ROTOR = 4
EXIT_DTW = 5
EXIT_COHERENCY = 6
EXIT_GRAPH = 7
EXIT_SPECTRAL = 8
EXIT_ISLANDING = 9
EXIT_SIMULATION = 10

# most specific classes first
_FAILURES = [
    (pipeline.ConfigError, EXIT_CONFIG, "config", "check the flags or the config file"),
    (ingest.CaseFormatError, EXIT_INPUT, "ingest", "fix the listed lines of the input file"),
    (ingest.IntegrityError, EXIT_INPUT, "ingest", "make branch and generator buses refer to existing buses"),
    (swingsim.ScenarioError, EXIT_INPUT, "swingsim", "check event ordering and branch names in the scenario"),
    (swingsim.SimulationError, EXIT_SIMULATION, "swingsim", "reduce dt or check that no generator is islanded"),
    (rotor.UnobservableSample, EXIT_ROTOR, "rotor", "drop samples with zero voltage or supply angle data"),
    (rotor.PreprocessError, EXIT_ROTOR, "rotor", "widen the analysis window or check the PMU file"),
    (dtw.BandError, EXIT_DTW, "dtw", "widen --band to at least the length difference of the traces"),
    (coherency.CoherencyError, EXIT_COHERENCY, "coherency", "check --k and the generator ids in the groups"),
    (netgraph.GraphError, EXIT_GRAPH, "netgraph", "close a branch to every isolated bus"),
    (spectral.SpectralError, EXIT_SPECTRAL, "spectral", "lower --beta or --k"),
    (islanding.IslandingError, EXIT_ISLANDING, "islanding", "revise the groups; the islands cannot honour them"),
    (FileNotFoundError, EXIT_INPUT, "io", "check the path"),
    (json.JSONDecodeError, EXIT_INPUT, "io", "the file is not valid JSON"),
]


def classify(exc: BaseException) -> tuple[int, str, str]:
    for cls, code, module, hint in _FAILURES:
        if isinstance(exc, cls):
            return code, module, hint
    raise exc


def _k_arg(s: str):
    if s == "auto":
        return s
    try:
        k = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'auto' or an integer, got {s!r}") from None
    return k


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value file; keys mirror the long flag names")
    p.add_argument("--network", type=Path, help="network.csv (default: bundled 39-bus case)")
    p.add_argument("--out", dest="out_dir", type=Path, help="output directory")


def _data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pmu", type=Path, help="pmu.csv with angles or terminal phasors")
    p.add_argument("--scenario", type=Path, help="scenario.json; simulated when no --pmu is given")
    p.add_argument("--angle-mode", choices=rotor.ANGLE_MODES, help="angle reference (default deviation)")
    p.add_argument("--window", help="analysis window START,END in seconds")
    p.add_argument("--dt", type=float, help="resampling interval of the angle traces, s")
    p.add_argument("--sim-dt", type=float, help="integrator step override, s")
    p.add_argument("--band", type=int, help="Sakoe-Chiba band half width in samples")
    p.add_argument("--workers", type=int, help="threads for the pairwise DTW stage")


def _partition_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--groups", help="coherent groups, e.g. 'G1,G8,G9;G2,G3,G4,G5,G6,G7'")
    p.add_argument("--beta", type=float, help="constraint level; default alpha*vol*lambda_max(Q_N)")
    p.add_argument("--alpha", type=float, help=f"fraction used for the default beta (default {spectral.DEFAULT_ALPHA})")
    p.add_argument("--open-branches", help="extra open branches, e.g. '16-17,1-2'")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dtwisland", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the classical-model simulator and write pmu.csv and voltages.csv")
    _common(p)
    p.add_argument("--scenario", type=Path, required=False, help="scenario.json")
    p.add_argument("--sim-dt", type=float, help="integrator step override, s")
    p.add_argument("--damping", type=float, help="damping for every machine, p.u.")

    p = sub.add_parser("dtw", help="DTW distance for one pair (JSON) or the full matrix (CSV)")
    _common(p)
    _data(p)
    p.add_argument("--pair", help="two generator ids, e.g. G1,G2")

    p = sub.add_parser("identify", help="coherent groups and the constraint matrix")
    _common(p)
    _data(p)
    p.add_argument("--k", type=_k_arg, help="number of groups or 'auto'")

    p = sub.add_parser("graph", help="flow-weighted graph of the network")
    _common(p)
    p.add_argument("--scenario", type=Path, help="apply the scenario's trips up to the islanding time")
    p.add_argument("--open-branches", help="extra open branches, e.g. '16-17,1-2'")
    p.add_argument("--emit-laplacian", action="store_true", help="write W, L and L_N as CSV matrices")

    p = sub.add_parser("partition", help="constrained spectral clustering of the buses")
    _common(p)
    p.add_argument("--scenario", type=Path, help="apply the scenario's trips up to the islanding time")
    p.add_argument("--coherency", type=Path, help="coherency.json written by 'identify'")
    p.add_argument("--k", type=_k_arg, help="number of islands or 'auto' (= number of groups)")
    _partition_flags(p)

    p = sub.add_parser("plan", help="cut-set, disruption and island balance for a bus assignment")
    _common(p)
    p.add_argument("--scenario", type=Path, help="apply the scenario's trips up to the islanding time")
    p.add_argument("--spectral", type=Path, required=False, help="spectral.json written by 'partition'")
    p.add_argument("--coherency", type=Path, help="coherency.json used to check the groups")
    p.add_argument("--groups", help="coherent groups, overrides --coherency")
    p.add_argument("--open-branches", help="extra open branches, e.g. '16-17,1-2'")
    p.add_argument("--no-repair", action="store_true", help="keep disconnected island fragments")

    for name, text in (("run", "full pipeline"), ("compare", "proposed method vs correlation baseline")):
        p = sub.add_parser(name, help=text)
        _common(p)
        _data(p)
        p.add_argument("--k", type=_k_arg, help="number of groups or 'auto'")
        _partition_flags(p)
    return ap


_CFG_KEYS = {f for f in pipeline.RunConfig.__dataclass_fields__}


def make_config(args: argparse.Namespace) -> pipeline.RunConfig:
    values: dict = {}
    if getattr(args, "config", None) is not None:
        if not args.config.exists():
            raise pipeline.ConfigError(f"config file {args.config} does not exist")
        values.update(pipeline.read_config_file(args.config))
    for key, val in vars(args).items():
        if key in _CFG_KEYS and val is not None:
            values[key] = val
    return pipeline.config_from_mapping(values)


def _emit(text: str, out_dir: Path | None, name: str) -> None:
    if out_dir is None:
        sys.stdout.write(text)
    else:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / name).write_text(text)


def _groups_from(args, cfg) -> list[tuple[str, ...]]:
    if cfg.groups is not None:
        return [tuple(g) for g in cfg.groups]
    if getattr(args, "coherency", None) is not None:
        return [tuple(g) for g in json.loads(args.coherency.read_text())["groups"]]
    raise pipeline.ConfigError("pass --groups or --coherency")


def _load_case(cfg):
    return ingest.load_network_case(cfg.network or ingest.bundled_case_path())


def _grid(cfg):
    sc = swingsim.load_scenario(cfg.scenario) if cfg.scenario is not None else None
    return pipeline.grid_case(_load_case(cfg), cfg, sc)


def cmd_simulate(args, cfg) -> None:
    if cfg.scenario is None:
        raise pipeline.ConfigError("simulate needs --scenario")
    case = _load_case(cfg)
    if args.damping is not None:
        case = swingsim.with_damping(case, args.damping)
    res = swingsim.simulate(case, swingsim.load_scenario(cfg.scenario), dt=cfg.sim_dt)
    out = cfg.out_dir or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    ingest.write_pmu_records(res.to_records(), out / "pmu.csv", decimals=9)
    res.voltages_csv(out / "voltages.csv")
    (out / "simulation.json").write_text(json.dumps({"stable": res.stable, **res.metadata}, indent=2, sort_keys=True) + "\n")
    print(f"stable={res.stable} samples={len(res.times)} -> {out}")


def _trajectories(cfg):
    inputs = pipeline.load_inputs(cfg)
    if inputs.records is None:
        raise pipeline.ConfigError("pass --pmu or --scenario")
    return inputs, pipeline.trajectories(inputs.records, inputs.case, cfg, inputs.scenario)


def cmd_dtw(args, cfg) -> None:
    _, ts = _trajectories(cfg)
    if args.pair:
        a, b = [s.strip() for s in args.pair.split(",")]
        by_id = {t.gen_id: t for t in ts}
        missing = [g for g in (a, b) if g not in by_id]
        if missing:
            raise coherency.CoherencyError(f"unknown generators {missing}")
        res = dtw.dtw(by_id[a], by_id[b], cfg.band)
        text = json.dumps({"pair": [a, b], "distance": res.distance, "path": [list(c) for c in res.path]}) + "\n"
        _emit(text, cfg.out_dir, "dtw_pair.json")
    else:
        mat = dtw.pairwise_dtw(ts, cfg.band, cfg.workers)
        _emit(pipeline.matrix_csv(mat, [t.gen_id for t in ts]), cfg.out_dir, "dtw_matrix.csv")


def cmd_identify(args, cfg) -> None:
    inputs, ts = _trajectories(cfg)
    ident = pipeline.identify_groups(ts, cfg.k, cfg.band, cfg.workers)
    q = coherency.build_constraints(ident.groups, inputs.case)
    payload = {**ident.as_dict(), "bus_ids": inputs.case.bus_ids, "q": q.tolist()}
    if cfg.out_dir is None:
        sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    (cfg.out_dir / "coherency.json").write_text(json.dumps(ident.as_dict(), indent=2, sort_keys=True) + "\n")
    (cfg.out_dir / "q.csv").write_text(pipeline.matrix_csv(q, inputs.case.bus_ids))
    (cfg.out_dir / "dtw_matrix.csv").write_text(pipeline.matrix_csv(ident.distances, ident.gen_ids))
    (cfg.out_dir / "angles.csv").write_text(pipeline.traces_csv(ts, ident.groups))
    print(f"k={ident.k} groups={pipeline.format_groups(ident.groups)}")


def cmd_graph(args, cfg) -> None:
    case = _grid(cfg)
    g = netgraph.build_graph(case)
    ncomp, _ = g.components()
    summary = {"buses": len(g.bus_ids), "vol": g.vol, "components": int(ncomp), "open_branches": [list(br.pair) for br in case.branches if not br.breaker]}
    if args.emit_laplacian:
        out = cfg.out_dir or Path(".")
        out.mkdir(parents=True, exist_ok=True)
        (out / "weights.csv").write_text(pipeline.matrix_csv(g.weights, g.bus_ids))
        (out / "laplacian.csv").write_text(pipeline.matrix_csv(g.laplacian, g.bus_ids))
        (out / "laplacian_norm.csv").write_text(pipeline.matrix_csv(g.laplacian_norm, g.bus_ids))
    _emit(json.dumps(summary, indent=2, sort_keys=True) + "\n", cfg.out_dir, "graph.json")


def cmd_partition(args, cfg) -> None:
    case = _grid(cfg)
    groups = _groups_from(args, cfg)
    k = len(groups) if cfg.k == "auto" else cfg.k
    q = coherency.build_constraints(groups, case)
    g = netgraph.build_graph(case)
    sol = pipeline.partition(g, q, k, cfg.beta, cfg.alpha)
    payload = {**pipeline.spectral_dict(sol, g.bus_ids), "groups": [list(x) for x in groups], "k": k}
    _emit(json.dumps(payload, indent=2, sort_keys=True) + "\n", cfg.out_dir, "spectral.json")


def cmd_plan(args, cfg) -> None:
    if args.spectral is None:
        raise pipeline.ConfigError("plan needs --spectral")
    case = _grid(cfg)
    sp = json.loads(args.spectral.read_text())
    assignment = {int(b): int(a) for b, a in sp["assignment"].items()}
    try:
        groups = _groups_from(args, cfg)
    except pipeline.ConfigError:
        groups = [tuple(g) for g in sp["groups"]] if "groups" in sp else None
    q = coherency.build_constraints(groups, case) if groups else None
    meta = {"beta": sp.get("beta"), "groups": [list(g) for g in groups] if groups else None}
    plan = islanding.build_plan(assignment, case, groups, q, repair=not args.no_repair, metadata=meta)
    if cfg.out_dir is None:
        sys.stdout.write(plan.to_json())
        return
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    (cfg.out_dir / "plan.json").write_text(plan.to_json())
    (cfg.out_dir / "plan_summary.csv").write_text(plan.summary_csv())
    print(f"islands={plan.n_islands} cut={','.join(b.label() for b in plan.cutset)} disruption={plan.disruption_mw:.2f} MW")


def cmd_run(args, cfg) -> None:
    res = pipeline.run_pipeline(cfg)
    p = res.plan
    print(
        f"groups={pipeline.format_groups(res.groups)} islands={p.n_islands} "
        f"cut={','.join(b.label() for b in p.cutset)} disruption={p.disruption_mw:.2f} MW "
        f"shed={p.load_shed_mw:.2f} MW"
    )
    if cfg.out_dir is None:
        sys.stdout.write(p.to_json())


def cmd_compare(args, cfg) -> None:
    rows = pipeline.compare_baseline(replace(cfg, out_dir=None))
    _emit(pipeline.comparison_csv(rows), cfg.out_dir, "comparison.csv")


COMMANDS = {
    "simulate": cmd_simulate,
    "dtw": cmd_dtw,
    "identify": cmd_identify,
    "graph": cmd_graph,
    "partition": cmd_partition,
    "plan": cmd_plan,
    "run": cmd_run,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = make_config(args)
        COMMANDS[args.command](args, cfg)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes below
        code, module, hint = classify(exc)
        print(f"error [{module}]: {exc}", file=sys.stderr)
        print(f"hint: {hint}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
