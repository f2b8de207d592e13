#!/usr/bin/env python3
"""Run the default three-stage augmentation pipeline on a toy task.

Generates expert demos, segments them into causal phases, expands the
dataset with SE(3)-retargeted and counterfactual trajectories, adds
proprioceptive noise copies, and validates everything by replay.

Usage: python scripts/run_full_pipeline.py [--task stack|coffee] [--demos 10]
       [--seed 0] [--workers 4] [--out out/full_run]
"""

import argparse
import json

from demoaug.pipeline import PipelineConfig, StageConfig, run_pipeline


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--task", default="stack", help="bundled task name or task JSON path")
    ap.add_argument("--demos", type=int, default=10)
    ap.add_argument("--se3-count", type=int, default=10)
    ap.add_argument("--causal-copies", type=int, default=1)
    ap.add_argument("--noise-sigma", type=float, default=0.01)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--out", default="out/full_run")
    args = ap.parse_args()

    cfg = PipelineConfig(
        task=args.task,
        stages=(
            StageConfig("gen", {"count": args.demos}),
            StageConfig("segment", {}),
            StageConfig("se3", {"count": args.se3_count}),
            StageConfig("causal", {"copies": args.causal_copies, "swap_prob": 1.0}),
            StageConfig("obs", {"noise_sigma": args.noise_sigma}),
            StageConfig("validate", {}),
        ),
        output_root=args.out,
        master_seed=args.seed,
        workers=args.workers,
    )
    report = run_pipeline(cfg)
    print(json.dumps(report, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
