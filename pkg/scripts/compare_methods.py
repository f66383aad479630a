"""Side-by-side table of the proposed grouping and the correlation baseline.

    python scripts/compare_methods.py [--scenario case1.json] [--groups 'G1,G8,G9;...']
"""

import argparse

from dtwisland import pipeline
from dtwisland.ingest import bundled_case_path


def main() -> None:
    ap = argparse.ArgumentParser(description="compare islanding plans from two grouping methods")
    ap.add_argument("--scenario", default=str(bundled_case_path("case1.json")))
    ap.add_argument("--groups", help="fix the proposed method's groups instead of identifying them")
    args = ap.parse_args()
    groups = pipeline.parse_groups(args.groups) if args.groups else None
    rows = pipeline.compare_baseline(pipeline.RunConfig(scenario=args.scenario, groups=groups))
    print(pipeline.comparison_csv(rows), end="")


if __name__ == "__main__":
    main()
