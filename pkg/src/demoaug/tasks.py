"""Bundled toy tasks: three-block stacking and a pod-into-machine task
with a pushable lid, plus a two-arm causal-spec fixture. Task definitions
can also be loaded from JSON config files with the same field layout."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .causal import CausalGraph, PhaseSpec, TaskCausalSpec, causal_spec_from_dict, causal_spec_to_dict
from .data import EntityDecl, TaskSchema
from .errors import UnknownTask
from .geometry import Pose
from .sim import ExpertParams, ObjectGeom, PoseSampler, ReceptacleGeom, SimParams, TaskDefinition

_PI = math.pi

WORKSPACE_MIN = (-0.35, -0.35, 0.0)
WORKSPACE_MAX = (0.35, 0.35, 0.40)
HOME = Pose.from_xyz_yaw(0.22, 0.22, 0.28)

BLOCK_HEIGHT = 0.04
POD_HEIGHT = 0.03


def _graph(nodes, pairs):
    """Undirected interaction pairs -> adjacency with both directions set."""
    edges = []
    for a, b in pairs:
        edges.append((a, b))
        edges.append((b, a))
    return CausalGraph.from_edges(nodes, edges)


def stack_causal_spec() -> TaskCausalSpec:
    nodes = ("robot0", "cube_a", "cube_b", "cube_c")
    phases = (
        PhaseSpec(0, {"robot0": _graph(nodes, [("robot0", "cube_a")])}, "cube_a", True),
        PhaseSpec(
            1,
            {"robot0": _graph(nodes, [("robot0", "cube_a"), ("cube_a", "cube_b")])},
            "cube_b",
            False,
        ),
        PhaseSpec(
            2,
            {"robot0": _graph(nodes, [("robot0", "cube_c"), ("cube_a", "cube_b")])},
            "cube_c",
            True,
        ),
        PhaseSpec(
            3,
            {
                "robot0": _graph(
                    nodes, [("robot0", "cube_c"), ("cube_c", "cube_a"), ("cube_a", "cube_b")]
                )
            },
            "cube_a",
            False,
        ),
    )
    return TaskCausalSpec("three_block_stack", phases, (0, 1, 2, 3))


def make_stack_task() -> TaskDefinition:
    schema = TaskSchema(
        task_id="three_block_stack",
        entities=(
            EntityDecl("cube_a", "block"),
            EntityDecl("cube_b", "block"),
            EntityDecl("cube_c", "block"),
        ),
        agents=("robot0",),
        workspace_min=np.array(WORKSPACE_MIN),
        workspace_max=np.array(WORKSPACE_MAX),
    )
    rest = BLOCK_HEIGHT / 2
    samplers = {
        "cube_a": PoseSampler((-0.20, -0.08), (-0.20, -0.08), (rest, rest), (-_PI, _PI)),
        "cube_b": PoseSampler((0.08, 0.20), (-0.20, -0.08), (rest, rest), (-_PI, _PI)),
        "cube_c": PoseSampler((-0.20, -0.08), (0.08, 0.20), (rest, rest), (-_PI, _PI)),
    }
    geoms = {eid: ObjectGeom(BLOCK_HEIGHT) for eid in ("cube_a", "cube_b", "cube_c")}
    return TaskDefinition(
        task_id="three_block_stack",
        kind="stack3",
        schema=schema,
        samplers=samplers,
        geoms=geoms,
        causal=stack_causal_spec(),
        home_pose=HOME,
        sim=SimParams(),
        expert=ExpertParams(),
        stack_order=("cube_b", "cube_a", "cube_c"),
        color_sensitive=True,  # stacking order is color-defined
    )


def coffee_causal_spec() -> TaskCausalSpec:
    nodes = ("robot0", "pod", "machine")
    phases = (
        PhaseSpec(0, {"robot0": _graph(nodes, [("robot0", "pod")])}, "pod", True),
        PhaseSpec(
            1,
            {"robot0": _graph(nodes, [("robot0", "pod"), ("pod", "machine")])},
            "machine",
            False,
        ),
    )
    # the place-and-close subtask spans the release, so raw segments 1 and 2
    # both map onto phase 1
    return TaskCausalSpec("pod_machine", phases, (0, 1, 1))


def make_coffee_task() -> TaskDefinition:
    schema = TaskSchema(
        task_id="pod_machine",
        entities=(
            EntityDecl("pod", "pod"),
            EntityDecl("machine", "receptacle", ("lid_angle",)),
        ),
        agents=("robot0",),
        workspace_min=np.array(WORKSPACE_MIN),
        workspace_max=np.array(WORKSPACE_MAX),
    )
    machine_height = 0.08
    samplers = {
        "pod": PoseSampler((-0.20, -0.06), (-0.15, 0.15), (POD_HEIGHT / 2, POD_HEIGHT / 2), (-_PI, _PI)),
        "machine": PoseSampler(
            (0.06, 0.20), (-0.15, 0.15), (machine_height / 2, machine_height / 2), (-_PI, _PI)
        ),
    }
    geoms = {
        "pod": ObjectGeom(POD_HEIGHT),
        "machine": ReceptacleGeom(
            height=machine_height,
            well_offset=(-0.03, 0.0),
            well_radius=0.02,
            well_floor_z=0.005,
            push_offset=(0.04, 0.0),
            push_radius=0.02,
            push_band=(0.075, 0.18),
            lid_gain=20.0,
            body_radius=0.06,
        ),
    }
    return TaskDefinition(
        task_id="pod_machine",
        kind="pod_lid",
        schema=schema,
        samplers=samplers,
        geoms=geoms,
        causal=coffee_causal_spec(),
        home_pose=HOME,
        sim=SimParams(),
        expert=ExpertParams(),
        color_sensitive=False,
    )


def transport_causal_fixture() -> TaskCausalSpec:
    """Two-agent causal spec used to exercise multi-agent graph joins."""
    nodes = ("robot0", "robot1", "hammer", "cube", "bin_lid", "target_bin")
    phases = (
        PhaseSpec(
            0,
            {
                "robot0": _graph(nodes, [("robot0", "bin_lid")]),
                "robot1": _graph(nodes, [("robot1", "cube")]),
            },
            "bin_lid",
            True,
        ),
        PhaseSpec(
            1,
            {
                "robot0": _graph(nodes, [("robot0", "hammer")]),
                "robot1": _graph(nodes, [("robot1", "cube"), ("cube", "target_bin")]),
            },
            "hammer",
            True,
        ),
        PhaseSpec(
            2,
            {
                "robot0": _graph(nodes, [("robot0", "hammer"), ("hammer", "robot1")]),
                "robot1": _graph(nodes, [("robot1", "hammer")]),
            },
            "hammer",
            False,
        ),
    )
    return TaskCausalSpec("transport_fixture", phases, (0, 1, 2))


BUNDLED_TASKS = {
    "stack": make_stack_task,
    "coffee": make_coffee_task,
}


# ---------------------------------------------------------------------------
# JSON config I/O


def task_to_dict(task: TaskDefinition) -> dict:
    def geom_to_dict(g):
        if isinstance(g, ReceptacleGeom):
            return {
                "type": "receptacle",
                "height": g.height,
                "well_offset": list(g.well_offset),
                "well_radius": g.well_radius,
                "well_floor_z": g.well_floor_z,
                "push_offset": list(g.push_offset),
                "push_radius": g.push_radius,
                "push_band": list(g.push_band),
                "lid_gain": g.lid_gain,
                "body_radius": g.body_radius,
            }
        return {"type": "object", "height": g.height, "graspable": g.graspable}

    return {
        "task_id": task.task_id,
        "kind": task.kind,
        "schema": {
            "task_id": task.schema.task_id,
            "entities": [
                {"entity_id": e.entity_id, "kind": e.kind, "extra_fields": list(e.extra_fields)}
                for e in task.schema.entities
            ],
            "agents": list(task.schema.agents),
            "workspace": {
                "min": [float(x) for x in task.schema.workspace_min],
                "max": [float(x) for x in task.schema.workspace_max],
            },
        },
        "samplers": {
            eid: {
                "x_range": list(s.x_range),
                "y_range": list(s.y_range),
                "z_range": list(s.z_range),
                "yaw_range": list(s.yaw_range),
            }
            for eid, s in task.samplers.items()
        },
        "geoms": {eid: geom_to_dict(g) for eid, g in task.geoms.items()},
        "home_pose": {
            "position": [float(x) for x in task.home_pose.position],
            "orientation": [float(x) for x in task.home_pose.orientation],
        },
        "sim": {
            "max_pos_step": task.sim.max_pos_step,
            "max_rot_step": task.sim.max_rot_step,
            "aperture_rate": task.sim.aperture_rate,
            "grasp_radius": task.sim.grasp_radius,
            "close_threshold": task.sim.close_threshold,
            "support_radius": task.sim.support_radius,
            "min_separation": task.sim.min_separation,
            "placement_attempts": task.sim.placement_attempts,
        },
        "expert": {
            "transit_z": task.expert.transit_z,
            "align_tol": task.expert.align_tol,
            "step_pos": task.expert.step_pos,
            "step_rot": task.expert.step_rot,
        },
        "xy_tol": task.xy_tol,
        "z_tol": task.z_tol,
        "lid_closed_threshold": task.lid_closed_threshold,
        "lid_initial_angle": task.lid_initial_angle,
        "stack_order": list(task.stack_order),
        "color_sensitive": task.color_sensitive,
        "causal_spec": causal_spec_to_dict(task.causal),
    }


def task_from_dict(obj: dict) -> TaskDefinition:
    def geom_from_dict(g):
        if g["type"] == "receptacle":
            return ReceptacleGeom(
                height=float(g["height"]),
                well_offset=tuple(g["well_offset"]),
                well_radius=float(g["well_radius"]),
                well_floor_z=float(g["well_floor_z"]),
                push_offset=tuple(g["push_offset"]),
                push_radius=float(g["push_radius"]),
                push_band=tuple(g["push_band"]),
                lid_gain=float(g["lid_gain"]),
                body_radius=float(g["body_radius"]),
            )
        return ObjectGeom(float(g["height"]), bool(g.get("graspable", True)))

    sch = obj["schema"]
    schema = TaskSchema(
        task_id=sch["task_id"],
        entities=tuple(
            EntityDecl(e["entity_id"], e["kind"], tuple(e.get("extra_fields", ()))) for e in sch["entities"]
        ),
        agents=tuple(sch["agents"]),
        workspace_min=np.array(sch["workspace"]["min"]),
        workspace_max=np.array(sch["workspace"]["max"]),
    )
    samplers = {
        eid: PoseSampler(
            tuple(s["x_range"]), tuple(s["y_range"]), tuple(s["z_range"]), tuple(s.get("yaw_range", (0, 0)))
        )
        for eid, s in obj["samplers"].items()
    }
    return TaskDefinition(
        task_id=obj["task_id"],
        kind=obj["kind"],
        schema=schema,
        samplers=samplers,
        geoms={eid: geom_from_dict(g) for eid, g in obj["geoms"].items()},
        causal=causal_spec_from_dict(obj["causal_spec"]),
        home_pose=Pose(np.array(obj["home_pose"]["position"]), np.array(obj["home_pose"]["orientation"])),
        sim=SimParams(**obj.get("sim", {})),
        expert=ExpertParams(**obj.get("expert", {})),
        xy_tol=float(obj.get("xy_tol", 0.015)),
        z_tol=float(obj.get("z_tol", 0.005)),
        lid_closed_threshold=float(obj.get("lid_closed_threshold", 0.1)),
        lid_initial_angle=float(obj.get("lid_initial_angle", math.pi / 2)),
        stack_order=tuple(obj.get("stack_order", ())),
        color_sensitive=bool(obj.get("color_sensitive", False)),
    )


def load_task_definition(path) -> TaskDefinition:
    return task_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def resolve_task(name_or_path: str) -> TaskDefinition:
    """Accept a bundled task name or a path to a task JSON file."""
    if name_or_path in BUNDLED_TASKS:
        return BUNDLED_TASKS[name_or_path]()
    p = Path(name_or_path)
    if p.is_file():
        return load_task_definition(p)
    raise UnknownTask(f"no bundled task or config file named {name_or_path!r}")
