"""Demonstration data model and its deterministic on-disk representation.

A dataset directory holds `manifest.json` (schema version, task schema,
trajectory index) plus one `traj_<id>.jsonl` file per trajectory with one
timestep per line. Key order is fixed and floats are written as shortest
round-trip decimals, so saving the same dataset twice is byte-identical
and load(save(ds)) == ds field for field.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import InvariantViolation, IoFailure, MissingManifest, RangeError, SchemaVersionMismatch
from .geometry import Pose

SCHEMA_VERSION = "1.0"

ENTITY_KINDS = ("block", "pod", "receptacle", "bin", "tool")

_ID_RE = re.compile(r"^[A-Za-z0-9_\-]+$")


class Provenance(str, Enum):
    HUMAN_SOURCE = "human_source"
    SE3_SYNTHETIC = "se3_synthetic"
    COUNTERFACTUAL_SYNTHETIC = "counterfactual_synthetic"
    MIXED = "mixed"


@dataclass(frozen=True)
class EntityDecl:
    entity_id: str
    kind: str
    extra_fields: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ENTITY_KINDS:
            raise InvariantViolation(f"unknown entity kind {self.kind!r}")
        object.__setattr__(self, "extra_fields", tuple(self.extra_fields))


@dataclass(frozen=True)
class TaskSchema:
    """Entity/agent declarations plus the axis-aligned workspace box."""

    task_id: str
    entities: tuple[EntityDecl, ...]
    agents: tuple[str, ...]
    workspace_min: np.ndarray
    workspace_max: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "entities", tuple(self.entities))
        object.__setattr__(self, "agents", tuple(self.agents))
        lo = np.asarray(self.workspace_min, dtype=np.float64).reshape(3).copy()
        hi = np.asarray(self.workspace_max, dtype=np.float64).reshape(3).copy()
        if not np.all(hi > lo):
            raise InvariantViolation("degenerate workspace box")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "workspace_min", lo)
        object.__setattr__(self, "workspace_max", hi)
        ids = [e.entity_id for e in self.entities]
        if len(set(ids)) != len(ids):
            raise InvariantViolation("duplicate entity ids in schema")
        if len(set(self.agents)) != len(self.agents):
            raise InvariantViolation("duplicate agent ids in schema")

    def entity_ids(self) -> tuple[str, ...]:
        return tuple(e.entity_id for e in self.entities)

    def entity(self, entity_id: str) -> EntityDecl:
        for e in self.entities:
            if e.entity_id == entity_id:
                return e
        raise InvariantViolation(f"entity {entity_id!r} not in schema")

    def __eq__(self, other):
        if not isinstance(other, TaskSchema):
            return NotImplemented
        return (
            self.task_id == other.task_id
            and self.entities == other.entities
            and self.agents == other.agents
            and np.array_equal(self.workspace_min, other.workspace_min)
            and np.array_equal(self.workspace_max, other.workspace_max)
        )


@dataclass(frozen=True)
class EntityState:
    entity_id: str
    pose: Pose
    extra: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "extra", dict(self.extra))


@dataclass(frozen=True)
class RobotState:
    agent_id: str
    eef_pose: Pose
    gripper_aperture: float

    def __post_init__(self):
        ap = min(1.0, max(0.0, float(self.gripper_aperture)))
        object.__setattr__(self, "gripper_aperture", ap)


@dataclass(frozen=True)
class Action:
    agent_id: str
    target_eef_pose: Pose
    gripper_command: float

    def __post_init__(self):
        cmd = min(1.0, max(0.0, float(self.gripper_command)))
        object.__setattr__(self, "gripper_command", cmd)


@dataclass(frozen=True)
class Timestep:
    t: int
    entities: tuple[EntityState, ...]
    robots: tuple[RobotState, ...]
    actions: tuple[Action, ...]
    phase: int | None = None
    interp: bool = False

    def __post_init__(self):
        object.__setattr__(self, "entities", tuple(self.entities))
        object.__setattr__(self, "robots", tuple(self.robots))
        object.__setattr__(self, "actions", tuple(self.actions))
        if self.t < 0:
            raise InvariantViolation(f"timestep index {self.t} < 0")

    def entity(self, entity_id: str) -> EntityState:
        for e in self.entities:
            if e.entity_id == entity_id:
                return e
        raise InvariantViolation(f"entity {entity_id!r} missing from timestep {self.t}")

    def robot(self, agent_id: str) -> RobotState:
        for r in self.robots:
            if r.agent_id == agent_id:
                return r
        raise InvariantViolation(f"agent {agent_id!r} missing from timestep {self.t}")

    def action(self, agent_id: str) -> Action:
        for a in self.actions:
            if a.agent_id == agent_id:
                return a
        raise InvariantViolation(f"action for {agent_id!r} missing from timestep {self.t}")


@dataclass(frozen=True)
class Trajectory:
    traj_id: str
    task_id: str
    timesteps: tuple[Timestep, ...]
    success: bool
    provenance: Provenance

    def __post_init__(self):
        object.__setattr__(self, "timesteps", tuple(self.timesteps))
        object.__setattr__(self, "provenance", Provenance(self.provenance))
        if not self.timesteps:
            raise InvariantViolation(f"trajectory {self.traj_id!r} is empty")

    def __len__(self):
        return len(self.timesteps)

    def phase_ranges(self) -> list[tuple[int, int, int]]:
        """Contiguous (phase, start, end) runs; requires phase labels."""
        if any(ts.phase is None for ts in self.timesteps):
            raise InvariantViolation(f"trajectory {self.traj_id!r} is not phase-labeled")
        runs = []
        start = 0
        for i in range(1, len(self.timesteps) + 1):
            if i == len(self.timesteps) or self.timesteps[i].phase != self.timesteps[start].phase:
                runs.append((int(self.timesteps[start].phase), start, i))
                start = i
        return runs


@dataclass(frozen=True)
class Dataset:
    schema_version: str
    task_schema: TaskSchema
    trajectories: tuple[Trajectory, ...]

    def __post_init__(self):
        object.__setattr__(self, "trajectories", tuple(self.trajectories))

    def __len__(self):
        return len(self.trajectories)

    def trajectory(self, traj_id: str) -> Trajectory:
        for tr in self.trajectories:
            if tr.traj_id == traj_id:
                return tr
        raise InvariantViolation(f"trajectory {traj_id!r} not in dataset")


# ---------------------------------------------------------------------------
# validation


def _check_pose_in_box(pose: Pose, schema: TaskSchema, what: str, tol: float = 1e-9):
    p = pose.position
    if np.any(p < schema.workspace_min - tol) or np.any(p > schema.workspace_max + tol):
        raise InvariantViolation(f"{what} position {p.tolist()} outside workspace bounds")


def validate_trajectory(traj: Trajectory, schema: TaskSchema):
    """Raise InvariantViolation naming the offending trajectory/timestep."""
    where = f"trajectory {traj.traj_id!r}"
    if traj.task_id != schema.task_id:
        raise InvariantViolation(f"{where}: task_id {traj.task_id!r} != schema {schema.task_id!r}")
    if not _ID_RE.match(traj.traj_id):
        raise InvariantViolation(f"{where}: traj_id is not filesystem-safe")
    expected_entities = schema.entity_ids()
    prev_t = None
    prev_phase = None
    for ts in traj.timesteps:
        at = f"{where}, timestep {ts.t}"
        if prev_t is not None and ts.t <= prev_t:
            raise InvariantViolation(f"{at}: ordering violation, t not strictly increasing")
        prev_t = ts.t
        got = tuple(e.entity_id for e in ts.entities)
        if got != expected_entities:
            raise InvariantViolation(f"{at}: entity ordering {got} != schema {expected_entities}")
        for e in ts.entities:
            decl = schema.entity(e.entity_id)
            if tuple(e.extra.keys()) != decl.extra_fields:
                raise InvariantViolation(
                    f"{at}: entity {e.entity_id!r} extra fields {tuple(e.extra)} != {decl.extra_fields}"
                )
        got_agents = tuple(r.agent_id for r in ts.robots)
        if got_agents != schema.agents:
            raise InvariantViolation(f"{at}: robot ordering {got_agents} != schema {schema.agents}")
        act_agents = tuple(a.agent_id for a in ts.actions)
        if act_agents != schema.agents:
            raise InvariantViolation(f"{at}: exactly one action per agent required, got {act_agents}")
        for a in ts.actions:
            _check_pose_in_box(a.target_eef_pose, schema, f"{at}: action target")
        if ts.phase is not None:
            if prev_phase is not None and ts.phase < prev_phase:
                raise InvariantViolation(f"{at}: phase labels decrease")
            prev_phase = ts.phase


def validate_dataset(ds: Dataset):
    if ds.schema_version.split(".")[0] != SCHEMA_VERSION.split(".")[0]:
        raise SchemaVersionMismatch(
            f"schema_version {ds.schema_version!r} unsupported (tool supports {SCHEMA_VERSION.split('.')[0]}.x)"
        )
    seen = set()
    for tr in ds.trajectories:
        if tr.traj_id in seen:
            raise InvariantViolation(f"duplicate traj_id {tr.traj_id!r}")
        seen.add(tr.traj_id)
        validate_trajectory(tr, ds.task_schema)


# ---------------------------------------------------------------------------
# slicing


def slice_subtrajectory(traj: Trajectory, t0: int, t1: int) -> Trajectory:
    """Timesteps [t0, t1) with indices re-based to zero."""
    if not (0 <= t0 < t1 <= len(traj.timesteps)):
        raise RangeError(f"slice [{t0}, {t1}) invalid for length {len(traj.timesteps)}")
    sliced = tuple(replace(ts, t=i) for i, ts in enumerate(traj.timesteps[t0:t1]))
    return Trajectory(
        traj_id=f"{traj.traj_id}_s{t0}_{t1}",
        task_id=traj.task_id,
        timesteps=sliced,
        success=traj.success,
        provenance=traj.provenance,
    )


# ---------------------------------------------------------------------------
# JSON codecs (explicit key order everywhere; floats via repr round-trip)


def _pose_to_json(pose: Pose) -> dict:
    return {
        "position": [float(x) for x in pose.position],
        "orientation": [float(x) for x in pose.orientation],
    }


def _pose_from_json(obj, where: str) -> Pose:
    try:
        pos = [float(x) for x in obj["position"]]
        ori = [float(x) for x in obj["orientation"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise InvariantViolation(f"{where}: malformed pose ({exc})") from exc
    try:
        return Pose(np.array(pos), np.array(ori))
    except InvariantViolation as exc:
        raise InvariantViolation(f"{where}: {exc}") from exc


def timestep_to_json(ts: Timestep, schema: TaskSchema) -> dict:
    out = {
        "t": int(ts.t),
        "entities": [
            {
                "entity_id": e.entity_id,
                "pose": _pose_to_json(e.pose),
                "extra": {k: float(e.extra[k]) for k in schema.entity(e.entity_id).extra_fields},
            }
            for e in ts.entities
        ],
        "robots": [
            {
                "agent_id": r.agent_id,
                "eef_pose": _pose_to_json(r.eef_pose),
                "gripper_aperture": float(r.gripper_aperture),
            }
            for r in ts.robots
        ],
        "actions": [
            {
                "agent_id": a.agent_id,
                "target_eef_pose": _pose_to_json(a.target_eef_pose),
                "gripper_command": float(a.gripper_command),
            }
            for a in ts.actions
        ],
        "phase": None if ts.phase is None else int(ts.phase),
    }
    if ts.interp:
        out["interp"] = True
    return out


def timestep_from_json(obj: dict, where: str) -> Timestep:
    try:
        entities = tuple(
            EntityState(e["entity_id"], _pose_from_json(e["pose"], where), dict(e.get("extra", {})))
            for e in obj["entities"]
        )
        robots = tuple(
            RobotState(r["agent_id"], _pose_from_json(r["eef_pose"], where), float(r["gripper_aperture"]))
            for r in obj["robots"]
        )
        actions = tuple(
            Action(a["agent_id"], _pose_from_json(a["target_eef_pose"], where), float(a["gripper_command"]))
            for a in obj["actions"]
        )
        phase = obj.get("phase")
        return Timestep(
            t=int(obj["t"]),
            entities=entities,
            robots=robots,
            actions=actions,
            phase=None if phase is None else int(phase),
            interp=bool(obj.get("interp", False)),
        )
    except (KeyError, TypeError) as exc:
        raise InvariantViolation(f"{where}: malformed timestep ({exc})") from exc


def schema_to_json(schema: TaskSchema) -> dict:
    return {
        "task_id": schema.task_id,
        "entities": [
            {"entity_id": e.entity_id, "kind": e.kind, "extra_fields": list(e.extra_fields)}
            for e in schema.entities
        ],
        "agents": list(schema.agents),
        "workspace": {
            "min": [float(x) for x in schema.workspace_min],
            "max": [float(x) for x in schema.workspace_max],
        },
    }


def schema_from_json(obj: dict) -> TaskSchema:
    try:
        return TaskSchema(
            task_id=obj["task_id"],
            entities=tuple(
                EntityDecl(e["entity_id"], e["kind"], tuple(e.get("extra_fields", ())))
                for e in obj["entities"]
            ),
            agents=tuple(obj["agents"]),
            workspace_min=np.array(obj["workspace"]["min"], dtype=np.float64),
            workspace_max=np.array(obj["workspace"]["max"], dtype=np.float64),
        )
    except (KeyError, TypeError) as exc:
        raise InvariantViolation(f"malformed task schema ({exc})") from exc


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=True, allow_nan=False)


# ---------------------------------------------------------------------------
# save / load


def traj_filename(traj_id: str) -> str:
    return f"traj_{traj_id}.jsonl"


def save_dataset(ds: Dataset, path) -> None:
    """Write manifest + per-trajectory jsonl files; deterministic bytes."""
    validate_dataset(ds)
    root = Path(path)
    try:
        root.mkdir(parents=True, exist_ok=True)
        manifest = {
            "schema_version": ds.schema_version,
            "task_schema": schema_to_json(ds.task_schema),
            "trajectories": [
                {
                    "traj_id": tr.traj_id,
                    "task_id": tr.task_id,
                    "file": traj_filename(tr.traj_id),
                    "num_timesteps": len(tr.timesteps),
                    "success": tr.success,
                    "provenance": tr.provenance.value,
                }
                for tr in ds.trajectories
            ],
        }
        with open(root / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(_dumps(manifest))
            fh.write("\n")
        for tr in ds.trajectories:
            with open(root / traj_filename(tr.traj_id), "w", encoding="utf-8", newline="\n") as fh:
                for ts in tr.timesteps:
                    fh.write(_dumps(timestep_to_json(ts, ds.task_schema)))
                    fh.write("\n")
    except OSError as exc:
        raise IoFailure(f"failed writing dataset to {root}: {exc}") from exc


def load_dataset(path) -> Dataset:
    """Read and fully validate a dataset directory."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise MissingManifest(f"no manifest.json under {root}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise IoFailure(f"failed reading {manifest_path}: {exc}") from exc
    version = manifest.get("schema_version")
    if not isinstance(version, str) or version.split(".")[0] != SCHEMA_VERSION.split(".")[0]:
        raise SchemaVersionMismatch(
            f"manifest schema_version {version!r} unsupported (tool supports {SCHEMA_VERSION.split('.')[0]}.x)"
        )
    schema = schema_from_json(manifest.get("task_schema", {}))
    trajectories = []
    for entry in manifest.get("trajectories", []):
        traj_id = entry["traj_id"]
        fpath = root / entry["file"]
        try:
            lines = fpath.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise IoFailure(f"failed reading {fpath}: {exc}") from exc
        timesteps = []
        for i, line in enumerate(lines):
            if not line.strip():
                continue
            where = f"trajectory {traj_id!r}, timestep line {i}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IoFailure(f"{where}: bad JSON ({exc})") from exc
            timesteps.append(timestep_from_json(obj, where))
        trajectories.append(
            Trajectory(
                traj_id=traj_id,
                task_id=entry.get("task_id", schema.task_id),
                timesteps=tuple(timesteps),
                success=bool(entry["success"]),
                provenance=Provenance(entry["provenance"]),
            )
        )
    ds = Dataset(schema_version=version, task_schema=schema, trajectories=tuple(trajectories))
    validate_dataset(ds)
    return ds
