"""Run an experiment plan and print the per-arm table.

    python3 scripts/run_plan.py configs/erlang_loss_plan.yaml [--events N] [--seed S]
"""

import argparse
import sys
import time
from dataclasses import replace

from insensitivity.config import parse_config
from insensitivity.harness import ExperimentPlan, insensitivity_experiment


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("plan")
    ap.add_argument("--events", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--json", metavar="PATH", help="also write the full report")
    args = ap.parse_args()

    plan = parse_config(args.plan)
    if not isinstance(plan, ExperimentPlan):
        ap.error(f"{args.plan} is a network spec, not an experiment plan")
    if args.events or args.seed is not None:
        plan.sim = replace(
            plan.sim,
            max_events=args.events or plan.sim.max_events,
            seed=plan.sim.seed if args.seed is None else args.seed,
            warmup_events=plan.sim.warmup_events,
        )
        plan.echo["sim"] = plan.sim.to_dict()
    t0 = time.perf_counter()
    report = insensitivity_experiment(plan)
    print(report.summary(), end="")
    print(f"{time.perf_counter() - t0:.1f}s for {len(plan.arms)} arms")
    if args.json:
        with open(args.json, "w") as fh:
            fh.write(report.to_json())
    return 0 if report.verdict else 1


if __name__ == "__main__":
    sys.exit(main())
