import hashlib
import json

import pytest

from demoaug.counterfactual import CounterfactualConfig
from demoaug.data import Dataset, load_dataset
from demoaug.errors import InvariantViolation, StageFailure
from demoaug.pipeline import (
    PipelineConfig,
    RatioPlan,
    StageConfig,
    pipeline_config_from_dict,
    ratio_study,
    run_pipeline,
    stats,
    validate_dataset_full,
)
from tests.conftest import make_labeled_demos


def tree_digest(root):
    digest = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            digest[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return digest


def test_stage_order_validation():
    with pytest.raises(InvariantViolation):
        PipelineConfig("stack", (StageConfig("causal"), StageConfig("gen")), "/tmp/x")
    with pytest.raises(InvariantViolation):
        PipelineConfig("stack", (StageConfig("segment"),), "/tmp/x")  # no input, no gen
    with pytest.raises(InvariantViolation):
        StageConfig("transmogrify")


def test_gen_only_pipeline(tmp_path):
    cfg = PipelineConfig("stack", (StageConfig("gen", {"count": 4}),), str(tmp_path / "o"), master_seed=2)
    report = run_pipeline(cfg)
    assert report["stages"][0]["generated"] == 4
    assert report["stages"][0]["all_success"]
    ds = load_dataset(tmp_path / "o" / "stage_00_gen")
    assert len(ds) == 4
    assert all(t.success for t in ds.trajectories)


def test_empty_stage_list(tmp_path):
    cfg = PipelineConfig("stack", (), str(tmp_path / "empty"))
    report = run_pipeline(cfg)
    assert report["stages"] == []


def test_full_pipeline_reconciles_counts(tmp_path):
    cfg = PipelineConfig(
        "stack",
        (
            StageConfig("gen", {"count": 3}),
            StageConfig("segment"),
            StageConfig("se3", {"count": 2}),
            StageConfig("causal", {"copies": 2}),
            StageConfig("obs", {"noise_sigma": 0.005}),
            StageConfig("validate"),
        ),
        str(tmp_path / "full"),
        master_seed=4,
    )
    report = run_pipeline(cfg)
    by_name = {s["name"]: s for s in report["stages"]}
    assert by_name["se3"]["acceptance_rate"] >= 0.95
    assert by_name["causal"]["copies"] == 2 * 5
    # counts reconcile stage to stage
    assert by_name["segment"]["in"] == 3
    assert by_name["se3"]["out"] == by_name["se3"]["in"] + by_name["se3"]["accepted"]
    assert by_name["causal"]["out"] == by_name["causal"]["in"] + by_name["causal"]["copies"]
    assert by_name["validate"]["ok"]


def test_pipeline_deterministic_across_worker_counts(tmp_path):
    stages = (
        StageConfig("gen", {"count": 3}),
        StageConfig("segment"),
        StageConfig("se3", {"count": 2}),
        StageConfig("causal", {"copies": 1}),
        StageConfig("obs", {"noise_sigma": 0.005}),
        StageConfig("validate"),
    )
    digests = []
    for workers in (1, 4):
        out = tmp_path / f"w{workers}"
        run_pipeline(PipelineConfig("stack", stages, str(out), master_seed=11, workers=workers))
        digests.append(tree_digest(out))
    assert digests[0] == digests[1]


def test_validate_fails_on_corrupt_replay(stack_task, stack_demos):
    from dataclasses import replace
    import numpy as np
    from demoaug.geometry import Pose

    traj = stack_demos.trajectories[0]
    steps = list(traj.timesteps)
    # corrupt the grasp-critical action: last one before the gripper closes
    idx = next(i for i, ts in enumerate(steps) if ts.phase == 1) - 1
    act = steps[idx].actions[0]
    shifted = Pose(
        np.clip(act.target_eef_pose.position + np.array([0.5, 0.0, 0.0]),
                stack_task.schema.workspace_min, stack_task.schema.workspace_max),
        act.target_eef_pose.orientation,
    )
    steps[idx] = replace(steps[idx], actions=(replace(act, target_eef_pose=shifted),))
    broken = replace(traj, timesteps=tuple(steps))
    result = validate_dataset_full(Dataset("1.0", stack_task.schema, (broken,)), stack_task)
    assert not result["ok"]
    assert any("replay" in f for f in result["failures"])


def test_validate_counts_exclude_counterfactual_replays(stack_task, stack_demos):
    from demoaug.counterfactual import augment_offline

    out = augment_offline(stack_demos, stack_task.causal, CounterfactualConfig(master_seed=1))
    result = validate_dataset_full(out, stack_task)
    assert result["ok"]
    assert result["replayed"] == len(stack_demos)  # originals only
    assert result["checked"] == len(out)


def test_ratio_study_exact_counts(tmp_path, stack_task):
    base = make_labeled_demos(stack_task, 5, seed_base=3)
    plan = RatioPlan(5, (0, 1, 2))
    datasets, table = ratio_study(base, plan, stack_task.causal, CounterfactualConfig(master_seed=0),
                                  out_root=tmp_path / "ratio")
    assert [row["synthetic_count"] for row in table] == [0, 5, 10]
    assert [row["real_count"] for row in table] == [5, 5, 5]
    for r, ds in zip((0, 1, 2), datasets):
        assert len(ds) == 5 + 5 * r
        reloaded = load_dataset(tmp_path / "ratio" / f"ratio_{r}")
        assert reloaded == ds
    assert json.loads((tmp_path / "ratio" / "ratio_table.json").read_text()) == table


def test_stats_summary(stack_task, stack_demos):
    s = stats(stack_demos)
    assert s["trajectories"] == len(stack_demos)
    assert s["trajectories_by_provenance"] == {"human_source": len(stack_demos)}
    assert set(s["phase_length_histogram"]) == {"0", "1", "2", "3"}
    for eid, box in s["entity_position_bounds"].items():
        assert all(lo <= hi for lo, hi in zip(box["min"], box["max"]))


def test_stats_empty():
    from demoaug.data import TaskSchema, EntityDecl
    import numpy as np

    schema = TaskSchema("t", (EntityDecl("a", "block"),), ("r",),
                        np.array([-1.0, -1, 0]), np.array([1.0, 1, 1]))
    s = stats(Dataset("1.0", schema, ()))
    assert s["trajectories"] == 0 and s["timesteps"] == 0


def test_stats_counts_counterfactual_copies(stack_task, stack_demos):
    from demoaug.counterfactual import augment_offline

    out = augment_offline(stack_demos, stack_task.causal,
                          CounterfactualConfig(master_seed=2, copies_per_trajectory=2))
    s = stats(out)
    assert s["trajectories_by_provenance"]["counterfactual_synthetic"] == 2 * len(stack_demos)


def test_pipeline_config_from_dict(tmp_path):
    obj = {
        "task": "stack",
        "seed": 7,
        "workers": 2,
        "out": str(tmp_path / "cfg"),
        "stages": [{"name": "gen", "count": 2}, {"name": "segment"}],
    }
    cfg = pipeline_config_from_dict(obj)
    assert cfg.master_seed == 7 and cfg.workers == 2
    assert cfg.stages[0].params == {"count": 2}
    report = run_pipeline(cfg)
    assert len(report["stages"]) == 2


def test_color_sensitive_obs_stage_refused(tmp_path):
    cfg = PipelineConfig(
        "stack",
        (
            StageConfig("gen", {"count": 1}),
            StageConfig("segment"),
            StageConfig("obs", {"noise_sigma": 0.0, "jitter": True}),
        ),
        str(tmp_path / "ref"),
        master_seed=0,
    )
    with pytest.raises(StageFailure):
        run_pipeline(cfg)
    # with force it passes
    cfg2 = PipelineConfig(
        "stack",
        (
            StageConfig("gen", {"count": 1}),
            StageConfig("segment"),
            StageConfig("obs", {"noise_sigma": 0.0, "jitter": True, "force": True}),
        ),
        str(tmp_path / "ref2"),
        master_seed=0,
    )
    run_pipeline(cfg2)
