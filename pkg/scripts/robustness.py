"""Data-loss experiment: drop the leading part of some PMU records and re-identify.

For each loss fraction and number of affected PMUs, draws random PMU subsets
and reports how often the coherent groups match the loss-free result.

    python scripts/robustness.py [--trials 20] [--seed 0]
"""

import argparse

import numpy as np

from dtwisland import pipeline
from dtwisland.ingest import bundled_case_path, load_network_case
from dtwisland.swingsim import apply_data_loss, load_scenario, simulate


def main() -> None:
    ap = argparse.ArgumentParser(description="PMU data-loss robustness of the coherency grouping")
    ap.add_argument("--scenario", default=str(bundled_case_path("case1.json")))
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    case = load_network_case(bundled_case_path())
    sc = load_scenario(args.scenario)
    sim = simulate(case, sc)
    cfg = pipeline.RunConfig(scenario=args.scenario)

    def groups(records):
        ts = pipeline.trajectories(records, case, cfg, sc)
        return {frozenset(g) for g in pipeline.identify_groups(ts).groups}

    ref = groups(apply_data_loss(sim, [], 0.0, sc.window))
    shown = [sorted(g, key=lambda x: int(x[1:])) for g in sorted(ref, key=len, reverse=True)]
    print(f"reference grouping: {pipeline.format_groups(shown)}")
    print("loss  pmus  unchanged")
    rng = np.random.default_rng(args.seed)
    for frac in (0.1, 0.2, 0.3, 0.5):
        for n in (1, 3, 5):
            same = sum(
                groups(apply_data_loss(sim, list(rng.choice(sim.gen_ids, n, replace=False)), frac, sc.window)) == ref
                for _ in range(args.trials)
            )
            print(f"{frac:4.1f}  {n:4d}  {same:3d}/{args.trials}")


if __name__ == "__main__":
    main()
