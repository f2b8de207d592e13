import numpy as np
import pytest

from demoaug.data import Provenance, slice_subtrajectory
from demoaug.errors import BudgetExhausted, TargetMissing
from demoaug.geometry import (
    Pose,
    SE3Transform,
    quat_from_yaw,
    quat_geodesic,
    relative_in_frame,
)
from demoaug.retarget import (
    GenerationReport,
    InterpolationConfig,
    PoseSampler,
    generate_demos,
    interpolate_prefix,
    transform_subtrajectory,
)
from demoaug.sim import replay
from demoaug.segmentation import SegmentationConfig, assign_phases
from tests.conftest import make_labeled_demos


def phase_slice(traj, phase):
    ranges = {p: (a, b) for p, a, b in traj.phase_ranges()}
    a, b = ranges[phase]
    return slice_subtrajectory(traj, a, b)


def test_transform_identity(stack_demos):
    sub = phase_slice(stack_demos.trajectories[0], 2)
    out = transform_subtrajectory(sub, SE3Transform.identity(), "cube_c")
    for a, b in zip(out.timesteps, sub.timesteps):
        assert a.entities == b.entities
        assert a.robots == b.robots
        assert a.actions == b.actions


def test_transform_pure_translation(stack_demos):
    sub = phase_slice(stack_demos.trajectories[0], 2)
    t = np.array([0.03, -0.02, 0.0])
    out = transform_subtrajectory(sub, SE3Transform(np.array([1.0, 0, 0, 0]), t), "cube_c")
    for a, b in zip(out.timesteps, sub.timesteps):
        assert np.allclose(a.entity("cube_c").pose.position, b.entity("cube_c").pose.position + t)
        assert np.array_equal(a.entity("cube_c").pose.orientation, b.entity("cube_c").pose.orientation)
        assert np.allclose(a.robots[0].eef_pose.position, b.robots[0].eef_pose.position + t)
        assert np.allclose(a.actions[0].target_eef_pose.position, b.actions[0].target_eef_pose.position + t)
        # non-target entities untouched
        assert a.entity("cube_a") == b.entity("cube_a")


def test_transform_yaw_preserves_relative_pose(stack_demos):
    sub = phase_slice(stack_demos.trajectories[0], 2)
    T = SE3Transform(quat_from_yaw(np.pi / 2), np.array([0.05, 0.02, 0.0]))
    out = transform_subtrajectory(sub, T, "cube_c")
    for a, b in zip(out.timesteps, sub.timesteps):
        ra = relative_in_frame(a.entity("cube_c").pose, a.robots[0].eef_pose)
        rb = relative_in_frame(b.entity("cube_c").pose, b.robots[0].eef_pose)
        assert np.linalg.norm(ra.translation - rb.translation) <= 1e-12
        assert quat_geodesic(ra.rotation, rb.rotation) <= 1e-12
        # gripper aperture/command unchanged
        assert a.robots[0].gripper_aperture == b.robots[0].gripper_aperture
        assert a.actions[0].gripper_command == b.actions[0].gripper_command


def test_transform_missing_target(stack_demos):
    sub = phase_slice(stack_demos.trajectories[0], 0)
    with pytest.raises(TargetMissing):
        transform_subtrajectory(sub, SE3Transform.identity(), "ghost")


def test_prefix_empty_when_equal():
    p = Pose.from_xyz_yaw(0.1, 0.2, 0.3, 0.4)
    assert interpolate_prefix(p, p, InterpolationConfig(), 1.0) == []


def test_prefix_step_count_translation():
    a = Pose.identity()
    b = Pose(np.array([0.1, 0.0, 0.0]), np.array([1.0, 0, 0, 0]))
    acts = interpolate_prefix(a, b, InterpolationConfig(max_pos_step=0.02), 1.0)
    assert len(acts) == 5
    positions = [a.target_eef_pose.position for a in acts]
    prev = np.zeros(3)
    for pos in positions:
        assert abs(np.linalg.norm(pos - prev) - 0.02) <= 1e-12
        prev = pos
    assert np.array_equal(positions[-1], b.position)
    assert all(a.gripper_command == 1.0 for a in acts)


def test_prefix_slerp_is_angle_linear():
    a = Pose.identity()
    b = Pose(np.zeros(3), quat_from_yaw(np.pi / 2))
    acts = interpolate_prefix(a, b, InterpolationConfig(max_rot_step=np.pi / 6), 0.0)
    assert len(acts) == 3
    # sample adjacent to the midpoint: 2/3 slerp of a 90 deg yaw is 60 deg
    got = acts[1].target_eef_pose.orientation
    assert quat_geodesic(got, quat_from_yaw(np.pi / 3)) <= 1e-12
    assert np.array_equal(acts[-1].target_eef_pose.orientation, b.orientation)


def test_prefix_respects_both_bounds():
    a = Pose.identity()
    b = Pose(np.array([0.05, 0, 0]), quat_from_yaw(1.0))
    cfg = InterpolationConfig(max_pos_step=0.02, max_rot_step=0.1)
    acts = interpolate_prefix(a, b, cfg, 0.5)
    assert len(acts) == 10  # rotation dominates: ceil(1.0 / 0.1)
    prev_pose = a
    for act in acts:
        dp = np.linalg.norm(act.target_eef_pose.position - prev_pose.position)
        dq = quat_geodesic(act.target_eef_pose.orientation, prev_pose.orientation)
        assert dp <= cfg.max_pos_step + 1e-12
        assert dq <= cfg.max_rot_step + 1e-12
        prev_pose = act.target_eef_pose


def test_generate_zero_target(stack_demos, stack_task):
    out = generate_demos(stack_demos, stack_task.causal, None, InterpolationConfig(), stack_task, 0)
    assert len(out) == 0


def test_generate_replica_with_degenerate_sampler(stack_task):
    ds = make_labeled_demos(stack_task, 1, seed_base=21)
    src = ds.trajectories[0]
    samplers = {
        eid: PoseSampler(
            (src.timesteps[0].entity(eid).pose.position[0],) * 2,
            (src.timesteps[0].entity(eid).pose.position[1],) * 2,
            (src.timesteps[0].entity(eid).pose.position[2],) * 2,
        )
        for eid in ("cube_a", "cube_b", "cube_c")
    }
    report = GenerationReport()
    out = generate_demos(ds, stack_task.causal, samplers, InterpolationConfig(), stack_task, 1,
                         master_seed=0, report=report)
    assert report.attempts == 1 and report.accepted == 1
    assert replay(out.trajectories[0], stack_task)[1]


def test_generate_accepts_and_replays(stack_demos, stack_task):
    report = GenerationReport()
    out = generate_demos(stack_demos, stack_task.causal, None, InterpolationConfig(), stack_task, 6,
                         master_seed=3, report=report)
    assert len(out) == 6
    assert report.acceptance_rate >= 0.95
    for tr in out.trajectories:
        assert tr.provenance is Provenance.SE3_SYNTHETIC
        final, ok = replay(tr, stack_task)
        assert ok
        # interp markers only at segment starts, never the whole trajectory
        assert any(ts.interp for ts in tr.timesteps)
        assert any(not ts.interp for ts in tr.timesteps)


def test_generated_phase_labels_match_segmentation(stack_demos, stack_task):
    out = generate_demos(stack_demos, stack_task.causal, None, InterpolationConfig(), stack_task, 3,
                         master_seed=8)
    cfg = SegmentationConfig()
    for tr in out.trajectories:
        relabeled = assign_phases(tr, stack_task.causal, cfg)
        assert [ts.phase for ts in relabeled.timesteps] == [ts.phase for ts in tr.timesteps]


def test_generate_relative_pose_preserved(stack_demos, stack_task):
    report = GenerationReport()
    out = generate_demos(stack_demos, stack_task.causal, None, InterpolationConfig(), stack_task, 4,
                         master_seed=5, report=report)
    for tr in out.trajectories:
        metas = {m["phase"]: m for m in report.segments[tr.traj_id]}
        by_phase: dict[int, list] = {}
        for ts in tr.timesteps:
            if not ts.interp:
                by_phase.setdefault(ts.phase, []).append(ts)
        for phase, steps in by_phase.items():
            meta = metas[phase]
            src = stack_demos.trajectory(meta["src_traj_id"])
            src_steps = src.timesteps[meta["src_start"]: meta["src_end"]]
            assert len(steps) == len(src_steps)
            target = stack_task.causal.phase(phase).target_entity
            for g, s in zip(steps, src_steps):
                rg = relative_in_frame(g.entity(target).pose, g.robots[0].eef_pose)
                rs = relative_in_frame(s.entity(target).pose, s.robots[0].eef_pose)
                assert np.linalg.norm(rg.translation - rs.translation) <= 1e-9
                assert quat_geodesic(rg.rotation, rs.rotation) <= 1e-9


def test_generate_budget_exhausted(stack_demos, stack_task):
    # impossible placement: samplers outside any reachable success... instead
    # use a zero budget so nothing can be accepted
    with pytest.raises(BudgetExhausted):
        generate_demos(stack_demos, stack_task.causal, None, InterpolationConfig(), stack_task, 2,
                       master_seed=0, attempt_budget=0)


def test_generate_deterministic_across_workers(stack_demos, stack_task):
    outs = []
    for workers in (1, 4):
        report = GenerationReport()
        out = generate_demos(stack_demos, stack_task.causal, None, InterpolationConfig(), stack_task, 4,
                             master_seed=13, workers=workers, report=report)
        outs.append((out, report.attempts))
    assert outs[0][0] == outs[1][0]
    assert outs[0][1] == outs[1][1]


def test_generate_coffee_acceptance_and_replay(coffee_demos, coffee_task):
    report = GenerationReport()
    out = generate_demos(coffee_demos, coffee_task.causal, None, InterpolationConfig(), coffee_task, 10,
                         master_seed=17, report=report)
    assert report.acceptance_rate >= 0.95
    for tr in out.trajectories:
        final, ok = replay(tr, coffee_task)
        assert ok
        assert final.lids["machine"] <= coffee_task.lid_closed_threshold


def test_synthetic_trajectories_survive_serialization(tmp_path, stack_demos, stack_task):
    from demoaug.data import Dataset, load_dataset, save_dataset

    out = generate_demos(stack_demos, stack_task.causal, None, InterpolationConfig(), stack_task, 2,
                         master_seed=23)
    ds = Dataset("1.0", stack_task.schema, out.trajectories)
    save_dataset(ds, tmp_path / "synth")
    loaded = load_dataset(tmp_path / "synth")
    assert loaded == ds
    # interp markers round-trip
    for a, b in zip(loaded.trajectories, ds.trajectories):
        assert [ts.interp for ts in a.timesteps] == [ts.interp for ts in b.timesteps]
