#!/usr/bin/env python3
"""Synthetic-to-real scaling harness.

Builds a base of expert demos, then expands it with counterfactual copies
at several synthetic:real ratios and prints the exact dataset sizes per
ratio. Policy training/evaluation is out of scope; this script only
produces and accounts for the datasets.

Usage: python scripts/ratio_study.py [--task stack] [--demos 50]
       [--ratios 0,1,2,3,5,10] [--seed 0] [--out out/ratio_study]
"""

import argparse
import json

from demoaug.counterfactual import CounterfactualConfig
from demoaug.pipeline import RatioPlan, ratio_study
from demoaug.tasks import resolve_task


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--task", default="stack")
    ap.add_argument("--demos", type=int, default=50)
    ap.add_argument("--ratios", default="0,1,2,3,5,10")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="out/ratio_study")
    args = ap.parse_args()

    task = resolve_task(args.task)
    base = _make_base(task, args.demos, args.seed)
    ratios = tuple(int(r) for r in args.ratios.split(","))
    plan = RatioPlan(args.demos, ratios)
    cfg = CounterfactualConfig(master_seed=args.seed, swap_probability=1.0)
    _, table = ratio_study(base, plan, task.causal, cfg, out_root=args.out)
    print(json.dumps(table, indent=2))


def _make_base(task, count, seed):
    from dataclasses import replace

    from demoaug.data import Dataset
    from demoaug.rng import derive_stream
    from demoaug.segmentation import SegmentationConfig, assign_phases
    from demoaug.sim import rollout_expert

    cfg = SegmentationConfig()
    trajs = []
    for i in range(count):
        tr = rollout_expert(task, derive_stream(seed, "base", i))
        tr = assign_phases(tr, task.causal, cfg)
        trajs.append(replace(tr, traj_id=f"demo_{i:04d}"))
    return Dataset("1.0", task.schema, tuple(trajs))


if __name__ == "__main__":
    main()
