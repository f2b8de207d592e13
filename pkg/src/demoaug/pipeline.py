"""Pipeline orchestration: demo generation, segmentation, the three
augmentation families, validation, statistics, and the ratio-scaling
harness. All stage outputs are deterministic under a fixed master seed
regardless of worker count: every random draw flows through RNG streams
derived from stable labels, and parallel results are merged in index
order."""

from __future__ import annotations

import json
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .counterfactual import CounterfactualConfig, augment_offline, gripper_transit_jitter
from .data import Dataset, Provenance, Trajectory, load_dataset, save_dataset, validate_dataset
from .errors import DemoaugError, InvariantViolation, StageFailure
from .imageaug import check_color_ops_allowed, proprio_noise
from .retarget import GenerationReport, InterpolationConfig, generate_demos
from .rng import derive_stream
from .segmentation import SegmentationConfig, assign_phases
from .sim import PoseSampler, TaskDefinition, replay, rollout_expert
from .tasks import resolve_task

REPLAYABLE = (Provenance.HUMAN_SOURCE, Provenance.SE3_SYNTHETIC)

STAGE_NAMES = ("gen", "segment", "se3", "causal", "obs", "validate")


@dataclass(frozen=True)
class StageConfig:
    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in STAGE_NAMES:
            raise InvariantViolation(f"unknown stage {self.name!r}")


@dataclass(frozen=True)
class PipelineConfig:
    task: str
    stages: tuple[StageConfig, ...]
    output_root: str
    master_seed: int = 0
    workers: int = 1
    input_path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        _check_stage_order([s.name for s in self.stages], self.input_path is not None)


def _check_stage_order(names: list[str], has_input: bool):
    order = {"gen": 0, "segment": 1, "se3": 2, "causal": 2, "obs": 2, "validate": 3}
    ranks = [order[n] for n in names]
    if ranks != sorted(ranks):
        raise InvariantViolation(f"stages {names} out of order (gen -> segment -> augs -> validate)")
    if names.count("gen") > 1 or names.count("segment") > 1 or names.count("validate") > 1:
        raise InvariantViolation("gen/segment/validate may appear at most once")
    if "gen" not in names and names and not has_input:
        raise InvariantViolation("pipeline without a gen stage needs input_path")


def pipeline_config_from_dict(obj: dict) -> PipelineConfig:
    stages = []
    for entry in obj.get("stages", []):
        entry = dict(entry)
        name = entry.pop("name")
        stages.append(StageConfig(name, entry))
    return PipelineConfig(
        task=obj["task"],
        stages=tuple(stages),
        output_root=obj["out"],
        master_seed=int(obj.get("seed", 0)),
        workers=int(obj.get("workers", 1)),
        input_path=obj.get("input"),
    )


def _parallel_map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# stages


def _stage_gen(task: TaskDefinition, params: dict, seed: int, workers: int) -> tuple[Dataset, dict]:
    count = int(params.get("count", 10))

    def gen_one(i: int) -> Trajectory:
        traj = rollout_expert(task, derive_stream(seed, "gen", i))
        return replace(traj, traj_id=f"demo_{i:04d}")

    trajs = _parallel_map(gen_one, range(count), workers)
    ds = Dataset("1.0", task.schema, tuple(trajs))
    return ds, {"generated": count, "all_success": all(t.success for t in trajs)}


def _stage_segment(ds: Dataset, task: TaskDefinition, params: dict, workers: int) -> tuple[Dataset, dict]:
    cfg = SegmentationConfig(
        close_threshold=float(params.get("close_threshold", 0.5)),
        debounce_steps=int(params.get("debounce", 3)),
        min_phase_len=int(params.get("min_phase_len", 5)),
    )
    labeled = _parallel_map(lambda tr: assign_phases(tr, task.causal, cfg), ds.trajectories, workers)
    out = Dataset(ds.schema_version, ds.task_schema, tuple(labeled))
    return out, {"segmented": len(labeled), "phases": task.causal.num_phases}


def _stage_se3(ds: Dataset, task: TaskDefinition, params: dict, seed: int, workers: int) -> tuple[Dataset, dict]:
    count = int(params.get("count", len(ds)))
    icfg = InterpolationConfig(
        max_pos_step=float(params.get("max_pos_step", 0.02)),
        max_rot_step=float(params.get("max_rot_step", 0.1)),
    )
    sampler = None
    if "pos_range" in params or "yaw_range" in params:
        xr = tuple(params.get("pos_range", (-0.2, 0.2))[:2])
        yr = tuple(params.get("pos_range", (-0.2, 0.2))[2:4] or xr)
        yaw = tuple(params.get("yaw_range", (-np.pi, np.pi)))
        sampler = PoseSampler(xr, yr, (0.0, 0.0), yaw)
    report = GenerationReport()
    synth = generate_demos(
        ds,
        task.causal,
        sampler,
        icfg,
        task,
        n_target=count,
        master_seed=seed,
        attempt_budget=int(params.get("budget", 10 * max(count, 1))),
        workers=workers,
        report=report,
    )
    merged = Dataset(ds.schema_version, ds.task_schema, ds.trajectories + synth.trajectories)
    return merged, {
        "requested": count,
        "accepted": report.accepted,
        "attempts": report.attempts,
        "acceptance_rate": report.acceptance_rate,
    }


def _stage_causal(ds: Dataset, task: TaskDefinition, params: dict, seed: int) -> tuple[Dataset, dict]:
    cfg = CounterfactualConfig(
        master_seed=seed,
        swap_probability=float(params.get("swap_prob", 1.0)),
        donor_policy=params.get("donor_policy", "same_phase_any_timestep"),
        gripper_jitter_range=float(params.get("gripper_jitter", 0.0)),
        copies_per_trajectory=int(params.get("copies", 1)),
    )
    info: dict = {}
    out = augment_offline(ds, task.causal, cfg, report=info)
    if cfg.gripper_jitter_range > 0.0:
        jittered = []
        for tr in out.trajectories:
            if tr.provenance is Provenance.COUNTERFACTUAL_SYNTHETIC:
                rng = derive_stream(seed, "jitter", tr.traj_id)
                jittered.append(gripper_transit_jitter(tr, task.causal, cfg, rng))
            else:
                jittered.append(tr)
        out = Dataset(out.schema_version, out.task_schema, tuple(jittered))
        info["gripper_jitter_range"] = cfg.gripper_jitter_range
    return out, info


def _stage_obs(ds: Dataset, task: TaskDefinition, params: dict, seed: int, workers: int) -> tuple[Dataset, dict]:
    sigma = float(params.get("noise_sigma", 0.01))
    copies = int(params.get("copies", 1))
    if params.get("jitter") or params.get("permute"):
        check_color_ops_allowed(task.color_sensitive, bool(params.get("force", False)))

    def noise_one(job) -> Trajectory:
        tr, k = job
        rng = derive_stream(seed, "obs", tr.traj_id, k)
        noisy = proprio_noise(tr, sigma, rng)
        prov = (
            Provenance.COUNTERFACTUAL_SYNTHETIC
            if tr.provenance is Provenance.COUNTERFACTUAL_SYNTHETIC
            else Provenance.MIXED
        )
        return replace(noisy, traj_id=f"{tr.traj_id}_obs{k:02d}", provenance=prov)

    jobs = [(tr, k) for tr in ds.trajectories for k in range(copies)]
    noisy = _parallel_map(noise_one, jobs, workers)
    out = Dataset(ds.schema_version, ds.task_schema, ds.trajectories + tuple(noisy))
    return out, {"noise_sigma": sigma, "noised_copies": len(noisy)}


def validate_dataset_full(ds: Dataset, task: TaskDefinition, replay_check: bool = True,
                          workers: int = 1) -> dict:
    """Invariant validation plus replay of dynamically consistent trajectories.

    Counterfactual composites are causally valid but not a single dynamics
    rollout, so they are invariant-checked only; their causal validity is
    covered by the expert-action oracle instead.
    """
    failures: list[str] = []
    try:
        validate_dataset(ds)
    except DemoaugError as exc:
        failures.append(f"invariant: {exc}")
    replayed = 0
    if replay_check and not failures:
        targets = [tr for tr in ds.trajectories if tr.provenance in REPLAYABLE]

        def check(tr: Trajectory):
            _, ok = replay(tr, task)
            return tr.traj_id, ok

        for traj_id, ok in _parallel_map(check, targets, workers):
            replayed += 1
            if not ok:
                failures.append(f"replay: trajectory {traj_id!r} does not reach success")
    return {"ok": not failures, "replayed": replayed, "checked": len(ds), "failures": failures}


# ---------------------------------------------------------------------------
# pipeline driver


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Execute the configured stages; write per-stage datasets and a report."""
    task = resolve_task(cfg.task)
    root = Path(cfg.output_root)
    root.mkdir(parents=True, exist_ok=True)
    ds = load_dataset(cfg.input_path) if cfg.input_path else None
    report = {"task": task.task_id, "seed": cfg.master_seed, "stages": []}
    for i, stage in enumerate(cfg.stages):
        in_count = len(ds) if ds is not None else 0
        try:
            if stage.name == "gen":
                ds, info = _stage_gen(task, stage.params, cfg.master_seed, cfg.workers)
            elif stage.name == "segment":
                ds, info = _stage_segment(ds, task, stage.params, cfg.workers)
            elif stage.name == "se3":
                ds, info = _stage_se3(ds, task, stage.params, cfg.master_seed, cfg.workers)
            elif stage.name == "causal":
                ds, info = _stage_causal(ds, task, stage.params, cfg.master_seed)
            elif stage.name == "obs":
                ds, info = _stage_obs(ds, task, stage.params, cfg.master_seed, cfg.workers)
            elif stage.name == "validate":
                info = validate_dataset_full(ds, task, replay_check=not stage.params.get("no_replay"),
                                             workers=cfg.workers)
                if not info["ok"]:
                    raise StageFailure(stage.name, "; ".join(info["failures"]))
            else:  # pragma: no cover - guarded by StageConfig
                raise StageFailure(stage.name, "unknown stage")
        except StageFailure:
            raise
        except DemoaugError as exc:
            raise StageFailure(stage.name, str(exc)) from exc
        stage_dir = root / f"stage_{i:02d}_{stage.name}"
        if stage.name != "validate":
            save_dataset(ds, stage_dir)
        report["stages"].append(
            {"name": stage.name, "in": in_count, "out": len(ds) if ds is not None else 0, **info}
        )
    with open(root / "report.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


# ---------------------------------------------------------------------------
# ratio harness


@dataclass(frozen=True)
class RatioPlan:
    base_count: int
    ratios: tuple[int, ...]

    def __post_init__(self):
        if any(r < 0 for r in self.ratios):
            raise InvariantViolation("ratios must be >= 0")


def ratio_study(
    base: Dataset,
    plan: RatioPlan,
    spec,
    cfg: CounterfactualConfig,
    out_root=None,
) -> tuple[list[Dataset], list[dict]]:
    """Emit one dataset per ratio r with exactly r * |base| counterfactual
    trajectories on top of the originals; policy training is out of scope."""
    if len(base) != plan.base_count:
        raise InvariantViolation(f"plan expects {plan.base_count} base demos, dataset has {len(base)}")
    datasets = []
    table = []
    for r in plan.ratios:
        if r == 0:
            ds_r = Dataset(base.schema_version, base.task_schema, base.trajectories)
        else:
            ds_r = augment_offline(base, spec, replace(cfg, copies_per_trajectory=r))
        synthetic = sum(1 for t in ds_r.trajectories if t.provenance is Provenance.COUNTERFACTUAL_SYNTHETIC)
        real = len(ds_r) - synthetic
        datasets.append(ds_r)
        table.append({"ratio": r, "real_count": real, "synthetic_count": synthetic})
        if out_root is not None:
            save_dataset(ds_r, Path(out_root) / f"ratio_{r}")
    if out_root is not None:
        with open(Path(out_root) / "ratio_table.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(table, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return datasets, table


# ---------------------------------------------------------------------------
# statistics


def stats(ds: Dataset) -> dict:
    """Counts by provenance, phase-length histograms, per-entity pose bounds."""
    traj_by_prov = Counter(tr.provenance.value for tr in ds.trajectories)
    step_by_prov: Counter = Counter()
    phase_hist: dict[int, Counter] = {}
    bounds: dict[str, dict] = {}
    total_steps = 0
    for tr in ds.trajectories:
        step_by_prov[tr.provenance.value] += len(tr)
        total_steps += len(tr)
        if all(ts.phase is not None for ts in tr.timesteps):
            for phase, t0, t1 in tr.phase_ranges():
                phase_hist.setdefault(phase, Counter())[t1 - t0] += 1
        for ts in tr.timesteps:
            for e in ts.entities:
                box = bounds.setdefault(
                    e.entity_id,
                    {"min": [np.inf] * 3, "max": [-np.inf] * 3},
                )
                for k in range(3):
                    box["min"][k] = min(box["min"][k], float(e.pose.position[k]))
                    box["max"][k] = max(box["max"][k], float(e.pose.position[k]))
    return {
        "trajectories": len(ds),
        "timesteps": total_steps,
        "trajectories_by_provenance": dict(sorted(traj_by_prov.items())),
        "timesteps_by_provenance": dict(sorted(step_by_prov.items())),
        "phase_length_histogram": {
            str(p): dict(sorted(c.items())) for p, c in sorted(phase_hist.items())
        },
        "entity_position_bounds": {k: bounds[k] for k in sorted(bounds)},
    }
