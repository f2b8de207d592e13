"""Quasi-static kinematic manipulation simulator plus scripted experts.

A floating gripper tracks absolute pose targets with per-step clamps.
Grasping is proximity-based with rigid attachment; releasing snaps the
object down onto the nearest support (table, stack top, or receptacle
well). A single revolute lid closes when the end effector pushes down
through its contact zone. Everything is deterministic and side-effect
free, which makes the scripted experts usable as analytic oracles: each
expert action is a pure function of the gripper state and the phase's
dependent entities only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .causal import TaskCausalSpec
from .data import Action, EntityState, RobotState, TaskSchema, Timestep, Trajectory, Provenance
from .errors import (
    ExpertFailure,
    InitialStateMissing,
    InvariantViolation,
    PlacementFailure,
    UnknownTask,
    UnreachableTarget,
)
from .geometry import Pose, SE3Transform, quat_from_yaw, quat_rotate, step_toward
from .rng import derive_stream

GRASPABLE_KINDS = ("block", "pod", "tool")


@dataclass(frozen=True)
class PoseSampler:
    """Uniform pose distribution: an axis-aligned position box plus a yaw range."""

    x_range: tuple[float, float]
    y_range: tuple[float, float]
    z_range: tuple[float, float]
    yaw_range: tuple[float, float] = (0.0, 0.0)
    master_seed: int = 0

    def __post_init__(self):
        for lo, hi in (self.x_range, self.y_range, self.z_range, self.yaw_range):
            if hi < lo:
                raise InvariantViolation(f"sampler range ({lo}, {hi}) has hi < lo")

    def sample(self, rng: np.random.Generator | None = None) -> Pose:
        if rng is None:
            rng = derive_stream(self.master_seed, "pose_sampler")
        x = rng.uniform(*self.x_range)
        y = rng.uniform(*self.y_range)
        z = rng.uniform(*self.z_range)
        yaw = rng.uniform(*self.yaw_range)
        return Pose(np.array([x, y, z]), quat_from_yaw(yaw))


@dataclass(frozen=True)
class ObjectGeom:
    """Extent data used for grasping and support snapping."""

    height: float
    graspable: bool = True


@dataclass(frozen=True)
class ReceptacleGeom:
    """A lidded receptacle: a well that captures dropped objects plus a
    push zone through which downward end-effector motion closes the lid."""

    height: float
    well_offset: tuple[float, float]
    well_radius: float
    well_floor_z: float
    push_offset: tuple[float, float]
    push_radius: float
    push_band: tuple[float, float]
    lid_gain: float
    body_radius: float
    graspable: bool = False


@dataclass(frozen=True)
class SimParams:
    max_pos_step: float = 0.02
    max_rot_step: float = 0.1
    aperture_rate: float = 0.25
    grasp_radius: float = 0.02
    close_threshold: float = 0.5
    support_radius: float = 0.025
    min_separation: float = 0.08
    placement_attempts: int = 1000


@dataclass(frozen=True)
class ExpertParams:
    transit_z: float = 0.20
    align_tol: float = 1e-6
    step_pos: float = 0.02
    step_rot: float = 0.1


@dataclass(frozen=True)
class TaskDefinition:
    task_id: str
    kind: str  # "stack3" | "pod_lid"
    schema: TaskSchema
    samplers: dict[str, PoseSampler]
    geoms: dict[str, object]
    causal: TaskCausalSpec
    home_pose: Pose
    sim: SimParams = field(default_factory=SimParams)
    expert: ExpertParams = field(default_factory=ExpertParams)
    xy_tol: float = 0.015
    z_tol: float = 0.005
    lid_closed_threshold: float = 0.1
    lid_initial_angle: float = math.pi / 2
    stack_order: tuple[str, ...] = ()
    color_sensitive: bool = False

    def __post_init__(self):
        if self.xy_tol <= 0 or self.z_tol <= 0 or self.lid_closed_threshold <= 0:
            raise InvariantViolation("task tolerances must be positive")

    @property
    def agent(self) -> str:
        return self.schema.agents[0]

    def lidded_entities(self) -> list[str]:
        return [e.entity_id for e in self.schema.entities if "lid_angle" in e.extra_fields]


@dataclass(frozen=True)
class SimState:
    objects: dict[str, Pose]
    lids: dict[str, float]
    gripper: RobotState
    attachment: tuple[str, SE3Transform] | None = None
    step_count: int = 0

    def __post_init__(self):
        object.__setattr__(self, "objects", dict(self.objects))
        object.__setattr__(self, "lids", dict(self.lids))


def _gripper_tf(pose: Pose) -> SE3Transform:
    return SE3Transform(pose.orientation, pose.position)


def _height(task: TaskDefinition, entity_id: str) -> float:
    return task.geoms[entity_id].height


def _well_xy(task: TaskDefinition, machine_id: str, pose: Pose) -> np.ndarray:
    geom = task.geoms[machine_id]
    local = np.array([geom.well_offset[0], geom.well_offset[1], 0.0])
    return (quat_rotate(pose.orientation, local) + pose.position)[:2]


def _push_xy(task: TaskDefinition, machine_id: str, pose: Pose) -> np.ndarray:
    geom = task.geoms[machine_id]
    local = np.array([geom.push_offset[0], geom.push_offset[1], 0.0])
    return (quat_rotate(pose.orientation, local) + pose.position)[:2]


# ---------------------------------------------------------------------------
# reset / step


def reset(task: TaskDefinition, seed) -> SimState:
    """Sample non-overlapping initial object poses; gripper at home, open."""
    rng = seed if isinstance(seed, np.random.Generator) else derive_stream(int(seed), "reset")
    order = task.schema.entity_ids()
    lo, hi = task.schema.workspace_min, task.schema.workspace_max
    for eid in order:
        s = task.samplers[eid]
        box_lo = np.array([s.x_range[0], s.y_range[0], s.z_range[0]])
        box_hi = np.array([s.x_range[1], s.y_range[1], s.z_range[1]])
        if np.any(box_lo < lo) or np.any(box_hi > hi):
            raise InvariantViolation(f"sampler box for {eid!r} exceeds the task workspace")
    for _ in range(task.sim.placement_attempts):
        poses = {eid: task.samplers[eid].sample(rng) for eid in order}
        ok = True
        ids = list(order)
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                d = np.linalg.norm(poses[ids[i]].position[:2] - poses[ids[j]].position[:2])
                if d < task.sim.min_separation:
                    ok = False
        if ok:
            lids = {eid: task.lid_initial_angle for eid in task.lidded_entities()}
            gripper = RobotState(task.agent, task.home_pose, 1.0)
            return SimState(poses, lids, gripper, None, 0)
    raise PlacementFailure(
        f"no non-overlapping placement found in {task.sim.placement_attempts} attempts"
    )


def _drop_pose(task: TaskDefinition, objects: dict[str, Pose], obj_id: str, pose: Pose) -> Pose:
    """Snap a released object down onto its support surface."""
    h = _height(task, obj_id)
    z_eps = 1e-6
    best_rest = h / 2.0  # table
    xy = pose.position[:2]
    for other_id, other in objects.items():
        if other_id == obj_id:
            continue
        geom = task.geoms[other_id]
        if isinstance(geom, ReceptacleGeom):
            if np.linalg.norm(xy - _well_xy(task, other_id, other)) <= geom.well_radius:
                rest = geom.well_floor_z + h / 2.0
            elif np.linalg.norm(xy - other.position[:2]) <= geom.body_radius:
                rest = other.position[2] + geom.height / 2.0 + h / 2.0
            else:
                continue
        else:
            if np.linalg.norm(xy - other.position[:2]) > task.sim.support_radius:
                continue
            rest = other.position[2] + geom.height / 2.0 + h / 2.0
        if rest <= pose.position[2] + z_eps and rest > best_rest:
            best_rest = rest
    return Pose(np.array([xy[0], xy[1], best_rest]), pose.orientation)


def step(state: SimState, action: Action, task: TaskDefinition) -> SimState:
    """Advance one tick: clamped eef tracking, aperture slew, grasp logic,
    support snapping, and lid articulation. Pure and deterministic."""
    sim = task.sim
    old_eef = state.gripper.eef_pose
    moved = step_toward(old_eef, action.target_eef_pose, sim.max_pos_step, sim.max_rot_step)
    pos = np.clip(moved.position, task.schema.workspace_min, task.schema.workspace_max)
    new_eef = Pose(pos, moved.orientation)

    ap = state.gripper.gripper_aperture
    delta = float(np.clip(action.gripper_command - ap, -sim.aperture_rate, sim.aperture_rate))
    new_ap = min(1.0, max(0.0, ap + delta))

    objects = dict(state.objects)
    lids = dict(state.lids)
    attachment = state.attachment

    if attachment is not None:
        obj_id, offset = attachment
        carried = _gripper_tf(new_eef).compose(offset)
        carried_pose = Pose(carried.translation, carried.rotation)
        if new_ap >= sim.close_threshold:
            attachment = None
            carried_pose = _drop_pose(task, objects, obj_id, carried_pose)
        objects[obj_id] = carried_pose
    elif new_ap < sim.close_threshold:
        best = None
        for eid, pose in objects.items():
            if not getattr(task.geoms[eid], "graspable", False):
                continue
            d = float(np.linalg.norm(pose.position - new_eef.position))
            if d <= sim.grasp_radius and (best is None or d < best[0]):
                best = (d, eid)
        if best is not None:
            _, eid = best
            offset = _gripper_tf(new_eef).inverse().compose(_gripper_tf(objects[eid]))
            attachment = (eid, offset)

    dz = float(new_eef.position[2] - old_eef.position[2])
    if dz < 0.0:
        for eid in list(lids.keys()):
            geom = task.geoms[eid]
            if np.linalg.norm(new_eef.position[:2] - _push_xy(task, eid, objects[eid])) > geom.push_radius:
                continue
            zmin, zmax = geom.push_band
            hi = min(float(old_eef.position[2]), zmax)
            lo = max(float(new_eef.position[2]), zmin)
            travel = hi - lo
            if travel > 0.0:
                lids[eid] = min(math.pi / 2, max(0.0, lids[eid] - geom.lid_gain * travel))

    gripper = RobotState(state.gripper.agent_id, new_eef, new_ap)
    return SimState(objects, lids, gripper, attachment, state.step_count + 1)


# ---------------------------------------------------------------------------
# success predicates


def _placed_on(state: SimState, task: TaskDefinition, upper: str, lower: str) -> bool:
    up, lo = state.objects[upper], state.objects[lower]
    if np.linalg.norm(up.position[:2] - lo.position[:2]) > task.xy_tol:
        return False
    expected_z = lo.position[2] + (_height(task, lower) + _height(task, upper)) / 2.0
    return abs(up.position[2] - expected_z) <= task.z_tol


def _attached(state: SimState, entity_id: str) -> bool:
    return state.attachment is not None and state.attachment[0] == entity_id


def _pod_in_well(state: SimState, task: TaskDefinition, pod: str, machine: str) -> bool:
    geom = task.geoms[machine]
    pose = state.objects[pod]
    well = _well_xy(task, machine, state.objects[machine])
    if np.linalg.norm(pose.position[:2] - well) > task.xy_tol:
        return False
    rest = geom.well_floor_z + _height(task, pod) / 2.0
    return abs(pose.position[2] - rest) <= task.z_tol


def _pod_machine_ids(task: TaskDefinition) -> tuple[str, str]:
    pod = next(e.entity_id for e in task.schema.entities if e.kind == "pod")
    machine = next(e.entity_id for e in task.schema.entities if e.kind == "receptacle")
    return pod, machine


def check_success(state: SimState, task: TaskDefinition, phase: int | None = None) -> bool:
    """Task-level success, or the phase-completion predicate when given."""
    if task.kind == "stack3":
        bottom, mid, top = task.stack_order
        if phase is None:
            return _placed_on(state, task, mid, bottom) and _placed_on(state, task, top, mid)
        if phase == 0:
            return _attached(state, mid) or _placed_on(state, task, mid, bottom)
        if phase == 1:
            return _placed_on(state, task, mid, bottom) and not _attached(state, mid)
        if phase == 2:
            return _attached(state, top) or _placed_on(state, task, top, mid)
        if phase == 3:
            return (
                _placed_on(state, task, top, mid)
                and _placed_on(state, task, mid, bottom)
                and not _attached(state, top)
            )
        raise UnknownTask(f"stack3 has no phase {phase}")
    if task.kind == "pod_lid":
        pod, machine = _pod_machine_ids(task)
        lid_ok = state.lids[machine] <= task.lid_closed_threshold
        if phase is None:
            return _pod_in_well(state, task, pod, machine) and lid_ok
        if phase == 0:
            return _attached(state, pod) or _pod_in_well(state, task, pod, machine)
        if phase == 1:
            return _pod_in_well(state, task, pod, machine) and not _attached(state, pod) and lid_ok
        raise UnknownTask(f"pod_lid has no phase {phase}")
    raise UnknownTask(f"unknown task kind {task.kind!r}")


# ---------------------------------------------------------------------------
# scripted experts


def _check_reachable(task: TaskDefinition, point: np.ndarray, what: str):
    if np.any(point < task.schema.workspace_min) or np.any(point > task.schema.workspace_max):
        raise UnreachableTarget(f"{what} {point.tolist()} outside workspace")


def _bounded_action(state: SimState, task: TaskDefinition, waypoint: np.ndarray, grip: float) -> Action:
    eef = state.gripper.eef_pose
    goal = Pose(waypoint, eef.orientation)
    stepped = step_toward(eef, goal, task.expert.step_pos, task.expert.step_rot)
    return Action(task.agent, stepped, grip)


def _hold(state: SimState, task: TaskDefinition, grip: float) -> Action:
    return Action(task.agent, state.gripper.eef_pose, grip)


def _grasp_policy(state: SimState, task: TaskDefinition, obj_id: str) -> Action:
    if _attached(state, obj_id):
        return _hold(state, task, 0.0)
    eef = state.gripper.eef_pose
    obj = state.objects[obj_id]
    grasp_point = obj.position
    _check_reachable(task, grasp_point, f"grasp point for {obj_id}")
    tol = task.expert.align_tol
    xy_err = float(np.linalg.norm(eef.position[:2] - grasp_point[:2]))
    if xy_err > tol:
        wp = np.array([grasp_point[0], grasp_point[1], task.expert.transit_z])
        return _bounded_action(state, task, wp, 1.0)
    if abs(float(eef.position[2] - grasp_point[2])) > tol:
        return _bounded_action(state, task, grasp_point, 1.0)
    return _bounded_action(state, task, grasp_point, 0.0)


def _place_policy(state: SimState, task: TaskDefinition, carried_id: str, place_point: np.ndarray) -> Action:
    if not _attached(state, carried_id):
        return _retreat_policy(state, task)
    _check_reachable(task, place_point, f"place point for {carried_id}")
    eef = state.gripper.eef_pose
    obj = state.objects[carried_id]
    offset_vec = eef.position - obj.position  # rigid while orientation is held
    tol = task.expert.align_tol
    xy_err = float(np.linalg.norm(obj.position[:2] - place_point[:2]))
    if xy_err > tol:
        obj_wp = np.array([place_point[0], place_point[1], task.expert.transit_z])
        return _bounded_action(state, task, obj_wp + offset_vec, 0.0)
    if float(obj.position[2] - place_point[2]) > tol:
        return _bounded_action(state, task, place_point + offset_vec, 0.0)
    return _hold(state, task, 1.0)  # release


def _retreat_policy(state: SimState, task: TaskDefinition) -> Action:
    eef = state.gripper.eef_pose
    wp = np.array([eef.position[0], eef.position[1], task.expert.transit_z])
    return _bounded_action(state, task, wp, 1.0)


def _stack_place_point(state: SimState, task: TaskDefinition, carried: str, base: str) -> np.ndarray:
    base_pose = state.objects[base]
    z = base_pose.position[2] + (_height(task, base) + _height(task, carried)) / 2.0
    return np.array([base_pose.position[0], base_pose.position[1], z])


def expert_action(state: SimState, task: TaskDefinition, phase: int) -> Action:
    """Deterministic waypoint policy; reads only the phase's dependent entities."""
    if task.kind == "stack3":
        bottom, mid, top = task.stack_order
        if phase == 0:
            return _grasp_policy(state, task, mid)
        if phase == 1:
            if _attached(state, mid):
                return _place_policy(state, task, mid, _stack_place_point(state, task, mid, bottom))
            return _retreat_policy(state, task)
        if phase == 2:
            return _grasp_policy(state, task, top)
        if phase == 3:
            if _attached(state, top):
                return _place_policy(state, task, top, _stack_place_point(state, task, top, mid))
            return _retreat_policy(state, task)
        raise UnknownTask(f"stack3 has no phase {phase}")
    if task.kind == "pod_lid":
        pod, machine = _pod_machine_ids(task)
        if phase == 0:
            return _grasp_policy(state, task, pod)
        if phase == 1:
            geom = task.geoms[machine]
            machine_pose = state.objects[machine]
            if _attached(state, pod):
                well = _well_xy(task, machine, machine_pose)
                rest = geom.well_floor_z + _height(task, pod) / 2.0
                return _place_policy(state, task, pod, np.array([well[0], well[1], rest]))
            if state.lids[machine] > task.lid_closed_threshold:
                push = _push_xy(task, machine, machine_pose)
                eef = state.gripper.eef_pose
                tol = task.expert.align_tol
                approach = np.array([push[0], push[1], geom.push_band[1]])
                _check_reachable(task, approach, "lid push point")
                if float(np.linalg.norm(eef.position[:2] - push)) > tol or eef.position[2] > geom.push_band[1] + tol:
                    return _bounded_action(state, task, approach, 1.0)
                bottom_wp = np.array([push[0], push[1], geom.push_band[0] + 0.01])
                return _bounded_action(state, task, bottom_wp, 1.0)
            return _retreat_policy(state, task)
        raise UnknownTask(f"pod_lid has no phase {phase}")
    raise UnknownTask(f"unknown task kind {task.kind!r}")


# ---------------------------------------------------------------------------
# rollout / replay


def observe(state: SimState, task: TaskDefinition, t: int, action: Action,
            phase: int | None = None, interp: bool = False) -> Timestep:
    entities = []
    for decl in task.schema.entities:
        extra = {}
        for name in decl.extra_fields:
            if name == "lid_angle":
                extra[name] = float(state.lids[decl.entity_id])
            else:
                raise InvariantViolation(f"no source for extra field {name!r}")
        entities.append(EntityState(decl.entity_id, state.objects[decl.entity_id], extra))
    return Timestep(
        t=t,
        entities=tuple(entities),
        robots=(state.gripper,),
        actions=(action,),
        phase=phase,
        interp=interp,
    )


def _scan_phase(state: SimState, task: TaskDefinition) -> int | None:
    """First incomplete phase, or None once the whole task is done."""
    for p in range(task.causal.num_phases):
        if not check_success(state, task, phase=p):
            return p
    return None


def rollout_expert(task: TaskDefinition, seed, max_steps: int = 400, tail_steps: int = 3) -> Trajectory:
    """Run the scripted expert from a sampled reset to task success."""
    state = reset(task, seed)
    timesteps = []
    remaining_tail = tail_steps
    for t in range(max_steps):
        phase = _scan_phase(state, task)
        acting_phase = phase if phase is not None else task.causal.num_phases - 1
        action = expert_action(state, task, acting_phase)
        timesteps.append(observe(state, task, t, action))
        state = step(state, action, task)
        if _scan_phase(state, task) is None and check_success(state, task):
            if remaining_tail == 0:
                break
            remaining_tail -= 1
    if not check_success(state, task):
        raise ExpertFailure(f"expert did not finish {task.task_id!r} within {max_steps} steps")
    seed_label = seed if isinstance(seed, int) else "rng"
    return Trajectory(
        traj_id=f"demo_{seed_label}" if isinstance(seed_label, int) else "demo",
        task_id=task.schema.task_id,
        timesteps=tuple(timesteps),
        success=True,
        provenance=Provenance.HUMAN_SOURCE,
    )


def sim_state_from_timestep(ts: Timestep, task: TaskDefinition) -> SimState:
    """Reconstruct a SimState from an observation, inferring attachment."""
    objects = {e.entity_id: e.pose for e in ts.entities}
    lids = {e.entity_id: float(e.extra["lid_angle"]) for e in ts.entities if "lid_angle" in e.extra}
    gripper = ts.robots[0]
    attachment = None
    if gripper.gripper_aperture < task.sim.close_threshold:
        near = []
        for eid, pose in objects.items():
            if not getattr(task.geoms[eid], "graspable", False):
                continue
            if float(np.linalg.norm(pose.position - gripper.eef_pose.position)) <= task.sim.grasp_radius:
                near.append(eid)
        if len(near) > 1:
            raise InitialStateMissing(
                f"timestep {ts.t}: ambiguous attachment among {sorted(near)}"
            )
        if near:
            offset = _gripper_tf(gripper.eef_pose).inverse().compose(_gripper_tf(objects[near[0]]))
            attachment = (near[0], offset)
    return SimState(objects, lids, gripper, attachment, ts.t)


def replay(traj: Trajectory, task: TaskDefinition, trace: bool = False):
    """Feed stored actions through step() from the stored initial state.

    Returns (final_state, success) or (final_state, success, states) where
    states[i] is the state before executing action i.
    """
    if not traj.timesteps:
        raise InitialStateMissing(f"trajectory {traj.traj_id!r} has no timesteps")
    state = sim_state_from_timestep(traj.timesteps[0], task)
    states = [state]
    for ts in traj.timesteps:
        state = step(state, ts.actions[0], task)
        states.append(state)
    ok = check_success(state, task)
    if trace:
        return state, ok, states
    return state, ok
