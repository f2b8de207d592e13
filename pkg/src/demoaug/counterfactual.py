"""Offline counterfactual augmentation.

New trajectories are synthesized by swapping causally irrelevant state
partitions with states sampled from donor trajectories in the same causal
phase. Actions and all non-swapped state are copied bit for bit, so the
expert action remains valid on every augmented state. One donor is drawn
per (phase, partition, copy): irrelevant partitions are static within a
phase, and a single donor keeps the swapped objects from teleporting
frame to frame.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from .causal import TaskCausalSpec, swap_candidates
from .data import Dataset, EntityState, Timestep, Trajectory, Provenance
from .errors import InvariantViolation, UnlabeledTrajectory
from .rng import derive_stream

logger = logging.getLogger(__name__)

DONOR_POLICIES = ("same_phase_any_timestep", "same_phase_aligned_timestep")


@dataclass(frozen=True)
class CounterfactualConfig:
    master_seed: int = 0
    swap_probability: float = 1.0
    donor_policy: str = "same_phase_any_timestep"
    gripper_jitter_range: float = 0.1
    copies_per_trajectory: int = 1
    close_threshold: float = 0.5
    jitter_boundary_margin: int = 3

    def __post_init__(self):
        if not (0.0 <= self.swap_probability <= 1.0):
            raise InvariantViolation("swap_probability must lie in [0, 1]")
        if self.donor_policy not in DONOR_POLICIES:
            raise InvariantViolation(f"unknown donor_policy {self.donor_policy!r}")
        if self.gripper_jitter_range < 0:
            raise InvariantViolation("gripper_jitter_range must be >= 0")
        if self.copies_per_trajectory < 1:
            raise InvariantViolation("copies_per_trajectory must be >= 1")


@dataclass(frozen=True)
class DonorEntry:
    traj_id: str
    t0: int
    t1: int
    snapshots: tuple[dict[str, EntityState], ...]  # one per timestep in [t0, t1)


@dataclass
class PhaseIndex:
    """Donor pool: (phase_index, partition signature) -> donor entries."""

    entries: dict[tuple[int, frozenset[str]], list[DonorEntry]] = field(default_factory=dict)

    def donors(self, phase: int, signature: frozenset[str], exclude_traj: str) -> list[DonorEntry]:
        pool = self.entries.get((phase, frozenset(signature)), [])
        return [d for d in pool if d.traj_id != exclude_traj]


def _require_labels(traj: Trajectory):
    if any(ts.phase is None for ts in traj.timesteps):
        raise UnlabeledTrajectory(f"trajectory {traj.traj_id!r} has unlabeled timesteps")


def build_phase_index(ds: Dataset, spec: TaskCausalSpec) -> PhaseIndex:
    """Index every (phase, resampleable partition) present in the dataset."""
    index = PhaseIndex()
    candidates = {p.phase_index: swap_candidates(p) for p in spec.phases}
    for traj in ds.trajectories:
        _require_labels(traj)
        for phase, t0, t1 in traj.phase_ranges():
            for part in candidates.get(phase, []):
                sig = part.members
                snapshots = tuple(
                    {eid: ts.entity(eid) for eid in sig} for ts in traj.timesteps[t0:t1]
                )
                key = (phase, sig)
                index.entries.setdefault(key, []).append(DonorEntry(traj.traj_id, t0, t1, snapshots))
    return index


def _swap_timestep(ts: Timestep, snapshot: dict[str, EntityState]) -> Timestep:
    entities = tuple(snapshot.get(e.entity_id, e) for e in ts.entities)
    return replace(ts, entities=entities)


def _counterfactual_copy(
    traj: Trajectory,
    copy_index: int,
    spec: TaskCausalSpec,
    cfg: CounterfactualConfig,
    index: PhaseIndex,
) -> tuple[Trajectory, int, int]:
    """Returns (copy, swaps_done, swaps_without_donor)."""
    rng = derive_stream(cfg.master_seed, "cf", traj.traj_id, copy_index)
    timesteps = list(traj.timesteps)
    swapped = 0
    missing = 0
    for phase, t0, t1 in traj.phase_ranges():
        for part in swap_candidates(spec.phase(phase)):
            if rng.uniform() >= cfg.swap_probability:
                continue
            donors = index.donors(phase, part.members, exclude_traj=traj.traj_id)
            if not donors:
                missing += 1
                continue
            donor = donors[int(rng.integers(len(donors)))]
            if cfg.donor_policy == "same_phase_any_timestep":
                snap = donor.snapshots[int(rng.integers(len(donor.snapshots)))]
                for t in range(t0, t1):
                    timesteps[t] = _swap_timestep(timesteps[t], snap)
            else:  # aligned: match relative position within the phase
                for t in range(t0, t1):
                    rel = min(t - t0, len(donor.snapshots) - 1)
                    timesteps[t] = _swap_timestep(timesteps[t], donor.snapshots[rel])
            swapped += 1
    copy = Trajectory(
        traj_id=f"{traj.traj_id}_cf{copy_index:03d}",
        task_id=traj.task_id,
        timesteps=tuple(timesteps),
        success=traj.success,
        provenance=Provenance.COUNTERFACTUAL_SYNTHETIC,
    )
    return copy, swapped, missing


def augment_offline(
    ds: Dataset,
    spec: TaskCausalSpec,
    cfg: CounterfactualConfig,
    report: dict | None = None,
) -> Dataset:
    """Alg.-style offline augmentation: originals retained, plus
    copies_per_trajectory counterfactual copies of every source trajectory.

    Copies that found no donor for any selected partition are still emitted
    (unswapped) with a warning, so output counts stay exact.
    """
    index = build_phase_index(ds, spec)
    out = list(ds.trajectories)
    total_swaps = 0
    no_donor = 0
    for traj in ds.trajectories:
        for copy_index in range(cfg.copies_per_trajectory):
            copy, swapped, missing = _counterfactual_copy(traj, copy_index, spec, cfg, index)
            if missing and not swapped:
                no_donor += 1
                logger.warning(
                    "no donor available for %s copy %d; emitted unswapped", traj.traj_id, copy_index
                )
            total_swaps += swapped
            out.append(copy)
    if report is not None:
        report["copies"] = cfg.copies_per_trajectory * len(ds.trajectories)
        report["partition_swaps"] = total_swaps
        report["no_donor_copies"] = no_donor
    return Dataset(ds.schema_version, ds.task_schema, tuple(out))


def gripper_transit_jitter(
    traj: Trajectory,
    spec: TaskCausalSpec,
    cfg: CounterfactualConfig,
    rng_stream,
) -> Trajectory:
    """Perturb gripper aperture and command together during transit.

    Only inside grasp-closing phases, strictly before the closing boundary
    (with a debounce-sized margin) and only while the gripper is open, so
    the perturbed pair stays expert-consistent.
    """
    if cfg.gripper_jitter_range == 0.0:
        return traj
    _require_labels(traj)
    timesteps = list(traj.timesteps)
    for phase, t0, t1 in traj.phase_ranges():
        if not spec.phase(phase).grasp_closes:
            continue
        window_end = t1 - cfg.jitter_boundary_margin
        for t in range(t0, max(t0, window_end)):
            ts = timesteps[t]
            robots = list(ts.robots)
            actions = list(ts.actions)
            changed = False
            for i, robot in enumerate(robots):
                if robot.gripper_aperture <= cfg.close_threshold:
                    continue  # attached or closing; leave untouched
                delta = float(rng_stream.uniform(-cfg.gripper_jitter_range, cfg.gripper_jitter_range))
                robots[i] = replace(robot, gripper_aperture=min(1.0, max(0.0, robot.gripper_aperture + delta)))
                for j, act in enumerate(actions):
                    if act.agent_id == robot.agent_id:
                        actions[j] = replace(
                            act, gripper_command=min(1.0, max(0.0, act.gripper_command + delta))
                        )
                changed = True
            if changed:
                timesteps[t] = replace(ts, robots=tuple(robots), actions=tuple(actions))
    return replace(traj, timesteps=tuple(timesteps))
