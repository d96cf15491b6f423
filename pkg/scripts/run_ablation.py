"""Run the four ablation arms of the synthetic harness and print a summary table.

    python scripts/run_ablation.py --seed 42 [--out-dir traces/]
"""

import argparse
from pathlib import Path

from viewreg.harness import HarnessConfig, run_experiment

ARMS = {
    "baseline": dict(svo_initial=0.0, svo_final=0.0, spd_base=0.0, spd_peak=0.0),
    "svo_only": dict(spd_base=0.0, spd_peak=0.0),
    "spd_only": dict(svo_initial=0.0, svo_final=0.0),
    "full": {},
}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--out-dir", type=Path, default=None)
    args = parser.parse_args()

    base = HarnessConfig()
    print(f"{'arm':<10} {'final r_svo':>12} {'min gap':>10} {'lem dist':>12} {'violations':>10}")
    for name, changes in ARMS.items():
        _, trace = run_experiment(base.with_schedule(**changes), args.seed)
        gap = trace.final("min_gap")
        violated = gap < base.scene.margin
        print(f"{name:<10} {trace.final('r_svo'):>12.4g} {gap:>10.4f} "
              f"{trace.final('lem_dist'):>12.4g} {'yes' if violated else 'no':>10}")
        if args.out_dir is not None:
            args.out_dir.mkdir(parents=True, exist_ok=True)
            (args.out_dir / f"trace_{name}.csv").write_text(trace.to_csv())


if __name__ == "__main__":
    main()
