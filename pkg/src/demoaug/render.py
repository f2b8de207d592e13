"""Schematic top-down rasterization of simulator states.

Produces small deterministic uint8 images used as fixtures for the visual
augmentation ops; this is a diagram renderer, not a camera model.
"""

from __future__ import annotations

import numpy as np

from .data import Timestep
from .sim import ReceptacleGeom, SimState, TaskDefinition, _well_xy, _push_xy, sim_state_from_timestep

_PALETTE = (
    (204, 48, 48),
    (48, 160, 48),
    (48, 80, 220),
    (220, 160, 40),
    (150, 60, 180),
)
_BACKGROUND = (226, 226, 220)
_GRIPPER_OPEN = (30, 30, 30)
_GRIPPER_CLOSED = (240, 240, 240)


def rasterize_state(state: SimState, task: TaskDefinition, size: int = 128) -> np.ndarray:
    img = np.empty((size, size, 3), dtype=np.uint8)
    img[...] = _BACKGROUND
    lo = task.schema.workspace_min
    hi = task.schema.workspace_max
    span = max(hi[0] - lo[0], hi[1] - lo[1])

    def to_px(xy):
        col = int((xy[0] - lo[0]) / span * (size - 1))
        row = int((xy[1] - lo[1]) / span * (size - 1))
        return (size - 1) - min(max(row, 0), size - 1), min(max(col, 0), size - 1)

    def fill_square(xy, half_m, color):
        r, c = to_px(xy)
        half = max(1, int(half_m / span * (size - 1)))
        img[max(0, r - half) : r + half + 1, max(0, c - half) : c + half + 1] = color

    for idx, decl in enumerate(task.schema.entities):
        pose = state.objects[decl.entity_id]
        geom = task.geoms[decl.entity_id]
        color = _PALETTE[idx % len(_PALETTE)]
        if isinstance(geom, ReceptacleGeom):
            fill_square(pose.position[:2], geom.body_radius, color)
            fill_square(_well_xy(task, decl.entity_id, pose), geom.well_radius, (40, 40, 40))
            # lid indicator: dark when open, light when closed
            frac = state.lids[decl.entity_id] / (np.pi / 2)
            shade = tuple(int(60 + 180 * (1 - frac)) for _ in range(3))
            fill_square(_push_xy(task, decl.entity_id, pose), geom.push_radius, shade)
        else:
            fill_square(pose.position[:2], geom.height / 2, color)

    grip = state.gripper
    color = _GRIPPER_CLOSED if grip.gripper_aperture < task.sim.close_threshold else _GRIPPER_OPEN
    r, c = to_px(grip.eef_pose.position[:2])
    arm = max(2, size // 32)
    img[max(0, r - arm) : r + arm + 1, c] = color
    img[r, max(0, c - arm) : c + arm + 1] = color
    return img


def rasterize_timestep(ts: Timestep, task: TaskDefinition, size: int = 128) -> np.ndarray:
    return rasterize_state(sim_state_from_timestep(ts, task), task, size)
