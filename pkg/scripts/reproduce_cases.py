"""Run both bundled scenarios with the reference groups and with automatic grouping.

    python scripts/reproduce_cases.py [--out DIR]
"""

import argparse
from pathlib import Path

from dtwisland import pipeline
from dtwisland.ingest import bundled_case_path

REFERENCE = {
    "case1": (("G1", "G8", "G9"), ("G2", "G3", "G4", "G5", "G6", "G7")),
    "case2": (("G1", "G2", "G3", "G8", "G9"), ("G4", "G5", "G6", "G7")),
}


def describe(label: str, res: pipeline.PipelineResult) -> None:
    p = res.plan
    print(f"{label}")
    print(f"  groups     {pipeline.format_groups(res.groups)}")
    print(f"  cut        {', '.join(b.label() for b in p.cutset)}  ({p.disruption_mw:.2f} MW)")
    for isl in p.islands:
        print(
            f"  island {isl.island}   gens={','.join(isl.generators) or '-'} "
            f"cap={isl.gen_capacity_mw:.1f} load={isl.load_mw:.1f} shed={isl.load_shed_mw:.2f} MW"
        )


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, help="write run artifacts under this directory")
    args = ap.parse_args()
    for name, groups in REFERENCE.items():
        scen = bundled_case_path(f"{name}.json")
        for tag, g in (("fixed groups", groups), ("auto groups", None)):
            out = None if args.out is None else args.out / f"{name}_{tag.split()[0]}"
            res = pipeline.run_pipeline(pipeline.RunConfig(scenario=scen, groups=g, out_dir=out))
            describe(f"{name}, {tag}", res)


if __name__ == "__main__":
    main()
