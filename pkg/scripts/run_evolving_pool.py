"""Evolving-pool simulation: onboard newcomers, evict the weakest, route.

Runs the fixed-size pool scenario under one or more policy presets and
writes the per-step metrics CSV.  Onboarding uses only anchor responses;
nothing is recalibrated or retrained during the run.

    python scripts/run_evolving_pool.py --policies max-acc min-cost --steps 10
"""

import argparse
import sys
from pathlib import Path

from latentroute.simulate import run_scenario


def main(argv=None) -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--models", type=int, default=10)
    ap.add_argument("--items", type=int, default=200)
    ap.add_argument("--dimension", type=int, default=3)
    ap.add_argument("--anchors", type=int, default=40)
    ap.add_argument("--pool-size", type=int, default=6)
    ap.add_argument("--steps", type=int, default=10)
    ap.add_argument("--stream", choices=["dominance", "clones"], default="dominance")
    ap.add_argument("--policies", nargs="+", default=["max-acc"])
    ap.add_argument("--max-total-cost", type=float, default=None)
    ap.add_argument("--out-dir", default=".")
    args = ap.parse_args(argv)

    for policy in args.policies:
        cfg = {
            "world.seed": args.seed,
            "world.models": args.models,
            "world.items": args.items,
            "world.dimension": args.dimension,
            "anchors.count": args.anchors,
            "pool.size": args.pool_size,
            "pool.steps": args.steps,
            "policy.name": policy,
            "stream.kind": args.stream,
        }
        if args.max_total_cost is not None:
            cfg["constraints.max_total_cost"] = args.max_total_cost
        metrics, csv_text = run_scenario(cfg)
        out = Path(args.out_dir) / f"pool_{policy}.csv"
        out.write_text(csv_text)
        first, last = metrics[0].reward, metrics[-1].reward
        print(f"{policy:9s} reward {first:+.3f} -> {last:+.3f} over {args.steps} steps "
              f"-> {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
