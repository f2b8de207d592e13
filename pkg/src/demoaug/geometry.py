"""Rigid-body math: unit quaternions, poses, and SE(3) transforms.

Quaternions are stored (w, x, y, z) with the double cover resolved by
keeping w >= 0. Helpers always return normalized, canonical quaternions;
the Pose/SE3Transform constructors validate but never silently rescale,
so values survive serialization round trips bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvariantViolation

UNIT_TOL = 1e-9
_DEGENERATE = 1e-8


def quat_canonical(q: np.ndarray) -> np.ndarray:
    """Flip sign so the scalar part is non-negative (idempotent)."""
    q = np.asarray(q, dtype=np.float64)
    return -q if q[0] < 0.0 else q


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    n = float(np.linalg.norm(q))
    if not np.isfinite(n) or n < _DEGENERATE:
        raise InvariantViolation(f"degenerate quaternion {q!r}")
    if abs(n - 1.0) <= 1e-12:
        # already unit: dividing would only churn the last bits, breaking
        # bit-exact identities (e.g. applying the identity transform)
        return quat_canonical(q)
    return quat_canonical(q / n)


def quat_multiply(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q, v) -> np.ndarray:
    """Rotate a 3-vector by a unit quaternion."""
    v = np.asarray(v, dtype=np.float64)
    u = np.asarray(q[1:], dtype=np.float64)
    t = 2.0 * np.cross(u, v)
    return v + q[0] * t + np.cross(u, t)


def quat_from_yaw(yaw: float) -> np.ndarray:
    half = 0.5 * float(yaw)
    return quat_canonical(np.array([np.cos(half), 0.0, 0.0, np.sin(half)]))


def quat_from_rotvec(w) -> np.ndarray:
    """Exponential map from a rotation vector (axis * angle, radians)."""
    w = np.asarray(w, dtype=np.float64)
    angle = float(np.linalg.norm(w))
    if angle < 1e-12:
        return np.array([1.0, 0.0, 0.0, 0.0])
    axis = w / angle
    half = 0.5 * angle
    s = np.sin(half)
    return quat_canonical(np.array([np.cos(half), s * axis[0], s * axis[1], s * axis[2]]))


def quat_geodesic(a, b) -> float:
    """Angular distance in radians between two unit quaternions, in [0, pi]."""
    rel = quat_multiply(a, quat_conjugate(b))
    return 2.0 * float(np.arctan2(np.linalg.norm(rel[1:]), abs(rel[0])))


def quat_slerp(a, b, u: float) -> np.ndarray:
    """Shortest-arc spherical interpolation; exact at both endpoints."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if u <= 0.0:
        return quat_canonical(a.copy())
    if u >= 1.0:
        return quat_canonical(b.copy())
    dot = float(np.dot(a, b))
    b_adj = -b if dot < 0.0 else b
    dot = abs(dot)
    if dot > 1.0 - 1e-12:
        return quat_normalize(a + u * (b_adj - a))
    theta = np.arccos(min(dot, 1.0))
    sin_theta = np.sin(theta)
    w1 = np.sin((1.0 - u) * theta) / sin_theta
    w2 = np.sin(u * theta) / sin_theta
    return quat_normalize(w1 * a + w2 * b_adj)


def _frozen_vec(x, size, what):
    arr = np.asarray(x, dtype=np.float64).reshape(size).copy()
    if not np.all(np.isfinite(arr)):
        raise InvariantViolation(f"non-finite {what}: {arr!r}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Pose:
    """Position (meters) plus unit quaternion orientation (w, x, y, z)."""

    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        p = _frozen_vec(self.position, 3, "position")
        q = np.asarray(self.orientation, dtype=np.float64).reshape(4).copy()
        if not np.all(np.isfinite(q)):
            raise InvariantViolation(f"non-finite quaternion: {q!r}")
        n = float(np.linalg.norm(q))
        if abs(n - 1.0) > UNIT_TOL:
            raise InvariantViolation(f"quaternion norm {n} deviates from 1 beyond {UNIT_TOL}")
        if q[0] < 0.0:
            q = -q
        q.flags.writeable = False
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", q)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))

    @classmethod
    def from_xyz_yaw(cls, x: float, y: float, z: float, yaw: float = 0.0) -> "Pose":
        return cls(np.array([x, y, z], dtype=np.float64), quat_from_yaw(yaw))

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.position, other.position) and np.array_equal(
            self.orientation, other.orientation
        )

    def __repr__(self):
        p = self.position
        q = self.orientation
        return f"Pose(p=[{p[0]:.4g}, {p[1]:.4g}, {p[2]:.4g}], q=[{q[0]:.4g}, {q[1]:.4g}, {q[2]:.4g}, {q[3]:.4g}])"


@dataclass(frozen=True, eq=False)
class SE3Transform:
    """Rigid transform: x -> R x + t, with R a unit quaternion rotation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=np.float64).reshape(4).copy()
        if not np.all(np.isfinite(q)):
            raise InvariantViolation(f"non-finite rotation: {q!r}")
        n = float(np.linalg.norm(q))
        if abs(n - 1.0) > UNIT_TOL:
            raise InvariantViolation(f"rotation norm {n} deviates from 1 beyond {UNIT_TOL}")
        if q[0] < 0.0:
            q = -q
        q.flags.writeable = False
        t = _frozen_vec(self.translation, 3, "translation")
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "SE3Transform":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @classmethod
    def planar(cls, yaw: float, tx: float = 0.0, ty: float = 0.0) -> "SE3Transform":
        """Yaw about world z plus an in-plane translation."""
        return cls(quat_from_yaw(yaw), np.array([tx, ty, 0.0]))

    def compose(self, other: "SE3Transform") -> "SE3Transform":
        """self after other: (self . other)(x) == self(other(x))."""
        rot = quat_normalize(quat_multiply(self.rotation, other.rotation))
        trans = quat_rotate(self.rotation, other.translation) + self.translation
        return SE3Transform(rot, trans)

    def inverse(self) -> "SE3Transform":
        rot = quat_normalize(quat_conjugate(self.rotation))
        return SE3Transform(rot, -quat_rotate(rot, self.translation))

    def apply_point(self, v) -> np.ndarray:
        return quat_rotate(self.rotation, v) + self.translation

    def apply_pose(self, pose: Pose) -> Pose:
        return Pose(
            self.apply_point(pose.position),
            quat_normalize(quat_multiply(self.rotation, pose.orientation)),
        )

    def __eq__(self, other):
        if not isinstance(other, SE3Transform):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )


def relative_transform(src: Pose, dst: Pose) -> SE3Transform:
    """World-frame transform T with T(src) == dst, i.e. T = dst . src^-1."""
    rot = quat_normalize(quat_multiply(dst.orientation, quat_conjugate(src.orientation)))
    trans = dst.position - quat_rotate(rot, src.position)
    return SE3Transform(rot, trans)


def relative_in_frame(frame: Pose, pose: Pose) -> SE3Transform:
    """Pose expressed in the frame of another pose: frame^-1 . pose.

    Invariant under any rigid transform applied to both arguments, which is
    what "relative pose is preserved" means for retargeted trajectories.
    """
    frame_tf = SE3Transform(frame.orientation, frame.position)
    pose_tf = SE3Transform(pose.orientation, pose.position)
    return frame_tf.inverse().compose(pose_tf)


def pose_distance(a: Pose, b: Pose) -> tuple[float, float]:
    """(positional distance, orientation geodesic) between two poses."""
    return (
        float(np.linalg.norm(a.position - b.position)),
        quat_geodesic(a.orientation, b.orientation),
    )


def step_toward(current: Pose, target: Pose, max_pos_step: float, max_rot_step: float) -> Pose:
    """Move from current toward target, clamped to per-step bounds.

    Reaches the target exactly once both residuals fit inside the bounds.
    """
    delta = target.position - current.position
    dist = float(np.linalg.norm(delta))
    if dist <= max_pos_step:
        pos = target.position
    else:
        pos = current.position + delta * (max_pos_step / dist)
    angle = quat_geodesic(current.orientation, target.orientation)
    if angle <= max_rot_step:
        ori = target.orientation
    else:
        ori = quat_slerp(current.orientation, target.orientation, max_rot_step / angle)
    return Pose(pos, ori)
