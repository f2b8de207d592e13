"""SE(3)-equivariant demonstration generation.

Sub-trajectories are retargeted to novel object poses: the phase target's
pose delta determines a rigid transform applied to the target pose, the
end-effector poses, and the action targets (the gripper-to-target relative
pose is therefore preserved at every step). A spherically/linearly
interpolated action prefix connects the robot's current pose to the start
of each retargeted segment, everything is executed in the simulator, and
only rollouts passing the task success predicate are kept.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .causal import TaskCausalSpec
from .data import Action, Dataset, Timestep, Trajectory, Provenance, slice_subtrajectory
from .errors import BudgetExhausted, InvariantViolation, TargetMissing
from .geometry import Pose, SE3Transform, quat_geodesic, quat_slerp, relative_transform
from .rng import derive_stream
from .sim import PoseSampler, TaskDefinition, check_success, observe, reset, step

__all__ = [
    "InterpolationConfig",
    "PoseSampler",
    "GenerationReport",
    "relative_transform",
    "transform_subtrajectory",
    "interpolate_prefix",
    "generate_demos",
]


@dataclass(frozen=True)
class InterpolationConfig:
    max_pos_step: float = 0.02
    max_rot_step: float = 0.1

    def __post_init__(self):
        if self.max_pos_step <= 0 or self.max_rot_step <= 0:
            raise InvariantViolation("interpolation step bounds must be positive")


@dataclass
class GenerationReport:
    attempts: int = 0
    accepted: int = 0
    segments: dict[str, list[dict]] = field(default_factory=dict)

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.attempts if self.attempts else 0.0


def transform_subtrajectory(sub: Trajectory, T: SE3Transform, target: str) -> Trajectory:
    """Map target-entity poses, eef poses, and action targets by T."""
    new_steps = []
    for ts in sub.timesteps:
        if all(e.entity_id != target for e in ts.entities):
            raise TargetMissing(f"target {target!r} missing at timestep {ts.t}")
        entities = tuple(
            replace(e, pose=T.apply_pose(e.pose)) if e.entity_id == target else e for e in ts.entities
        )
        robots = tuple(replace(r, eef_pose=T.apply_pose(r.eef_pose)) for r in ts.robots)
        actions = tuple(replace(a, target_eef_pose=T.apply_pose(a.target_eef_pose)) for a in ts.actions)
        new_steps.append(replace(ts, entities=entities, robots=robots, actions=actions))
    return replace(sub, timesteps=tuple(new_steps))


def interpolate_prefix(
    from_pose: Pose,
    to_pose: Pose,
    cfg: InterpolationConfig,
    gripper: float,
    agent_id: str = "robot0",
) -> list[Action]:
    """Linear position / spherical orientation ramp, gripper held constant.

    Step count is the smallest n respecting both per-step bounds; the final
    action equals `to_pose` exactly. Returns [] when the poses coincide.
    """
    dist = float(np.linalg.norm(to_pose.position - from_pose.position))
    angle = quat_geodesic(from_pose.orientation, to_pose.orientation)
    n = max(
        math.ceil(dist / cfg.max_pos_step - 1e-9),
        math.ceil(angle / cfg.max_rot_step - 1e-9),
    )
    if n <= 0:
        return []
    actions = []
    for i in range(1, n + 1):
        if i == n:
            pose = to_pose
        else:
            u = i / n
            pos = from_pose.position + u * (to_pose.position - from_pose.position)
            ori = quat_slerp(from_pose.orientation, to_pose.orientation, u)
            pose = Pose(pos, ori)
        actions.append(Action(agent_id, pose, gripper))
    return actions


def _phase_sources(ds: Dataset, spec: TaskCausalSpec) -> dict[int, list[tuple[Trajectory, int, int]]]:
    sources: dict[int, list[tuple[Trajectory, int, int]]] = {p.phase_index: [] for p in spec.phases}
    for traj in ds.trajectories:
        if not traj.success:
            continue
        for phase, t0, t1 in traj.phase_ranges():
            sources[phase].append((traj, t0, t1))
    return sources


def _trim_start(traj: Trajectory, t0: int, t1: int, target: str, approach_radius: float) -> int:
    """First index whose eef is within the approach ball of the phase target.

    The transit prelude before that point is replaced by the interpolation
    prefix; trimming keeps the retargeted poses inside the workspace when
    the transform has a large rotation component.
    """
    target_pos = traj.timesteps[t0].entity(target).pose.position
    for i in range(t0, t1):
        eef = traj.timesteps[i].robots[0].eef_pose.position
        if float(np.linalg.norm(eef - target_pos)) <= approach_radius:
            return i
    return t0


def _merge_samplers(task: TaskDefinition, sampler) -> dict[str, PoseSampler]:
    if sampler is None:
        return dict(task.samplers)
    if isinstance(sampler, PoseSampler):
        merged = {}
        for eid, base in task.samplers.items():
            merged[eid] = PoseSampler(sampler.x_range, sampler.y_range, base.z_range, sampler.yaw_range)
        return merged
    merged = dict(task.samplers)
    merged.update(sampler)
    return merged


def _one_attempt(
    attempt: int,
    sources,
    spec: TaskCausalSpec,
    task: TaskDefinition,
    samplers: dict[str, PoseSampler],
    icfg: InterpolationConfig,
    master_seed: int,
    approach_radius: float,
):
    rng = derive_stream(master_seed, "se3_attempt", attempt)
    scratch = replace(task, samplers=samplers)
    state = reset(scratch, rng)
    agent = task.agent
    timesteps: list[Timestep] = []
    seg_meta = []
    t = 0
    for phase_spec in spec.phases:
        p = phase_spec.phase_index
        options = sources[p]
        src_traj, t0, t1 = options[int(rng.integers(len(options)))]
        trim = _trim_start(src_traj, t0, t1, phase_spec.target_entity, approach_radius)
        sub = slice_subtrajectory(src_traj, trim, t1)
        src_target = sub.timesteps[0].entity(phase_spec.target_entity).pose
        cur_target = state.objects[phase_spec.target_entity]
        T = relative_transform(src_target, cur_target)
        tsub = transform_subtrajectory(sub, T, phase_spec.target_entity)
        first = tsub.timesteps[0]
        prefix = interpolate_prefix(
            state.gripper.eef_pose,
            first.robots[0].eef_pose,
            icfg,
            gripper=first.actions[0].gripper_command,
            agent_id=agent,
        )
        for a in prefix:
            timesteps.append(observe(state, task, t, a, phase=p, interp=True))
            state = step(state, a, task)
            t += 1
        for ts_src in tsub.timesteps:
            a = ts_src.actions[0]
            timesteps.append(observe(state, task, t, a, phase=p, interp=False))
            state = step(state, a, task)
            t += 1
        seg_meta.append(
            {"phase": p, "src_traj_id": src_traj.traj_id, "src_start": trim, "src_end": t1}
        )
    success = check_success(state, task)
    return success, timesteps, seg_meta


def generate_demos(
    ds: Dataset,
    spec: TaskCausalSpec,
    sampler,
    icfg: InterpolationConfig,
    task: TaskDefinition,
    n_target: int,
    master_seed: int = 0,
    attempt_budget: int | None = None,
    approach_radius: float = 0.10,
    workers: int = 1,
    report: GenerationReport | None = None,
) -> Dataset:
    """Generate n_target accepted synthetic demonstrations.

    sampler may be None (use the task's pose distributions), a single
    PoseSampler applied to every entity (keeping per-entity rest heights),
    or a {entity_id: PoseSampler} mapping. Raises BudgetExhausted when the
    attempt budget runs out first; acceptance is deterministic per attempt
    index, so worker count never changes the result.
    """
    if report is None:
        report = GenerationReport()
    if n_target == 0:
        return Dataset(ds.schema_version, ds.task_schema, ())
    sources = _phase_sources(ds, spec)
    for p, options in sources.items():
        if not options:
            raise InvariantViolation(f"no successful phase-labeled source covers phase {p}")
    samplers = _merge_samplers(task, sampler)
    budget = attempt_budget if attempt_budget is not None else 10 * n_target
    accepted: list[Trajectory] = []
    attempt = 0
    consumed = 0
    wave = max(2 * workers, 4)
    while attempt < budget and len(accepted) < n_target:
        indices = list(range(attempt, min(attempt + wave, budget)))
        attempt = indices[-1] + 1

        def run(i):
            return i, _one_attempt(
                i, sources, spec, task, samplers, icfg, master_seed, approach_radius
            )

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run, indices))
        else:
            results = [run(i) for i in indices]
        # acceptance is intrinsic to the attempt index, so only the attempts
        # up to the n-th success count as consumed -- wave size (and hence
        # worker count) never leaks into the report
        for i, (success, timesteps, seg_meta) in sorted(results, key=lambda r: r[0]):
            if len(accepted) >= n_target:
                break
            consumed = i + 1
            if not success:
                continue
            traj = Trajectory(
                traj_id=f"se3_{master_seed}_{i:06d}",
                task_id=task.schema.task_id,
                timesteps=tuple(timesteps),
                success=True,
                provenance=Provenance.SE3_SYNTHETIC,
            )
            accepted.append(traj)
            report.segments[traj.traj_id] = seg_meta
    report.attempts = consumed
    report.accepted = len(accepted)
    if len(accepted) < n_target:
        raise BudgetExhausted(
            f"accepted {len(accepted)}/{n_target} within {report.attempts} attempts "
            f"(rate {report.acceptance_rate:.3f})",
            accepted=len(accepted),
            attempts=report.attempts,
        )
    return Dataset(ds.schema_version, ds.task_schema, tuple(accepted))
