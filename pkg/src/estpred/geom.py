"""Rigid-body types, world-centric motion composition and planar projection."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataError, EmptyInputError

TWO_PI = 2.0 * math.pi
ORTHO_TOL = 1e-9

WORLD_XY = "world-xy"
CAMERA_XZ = "camera-xz"
CONVENTIONS = (WORLD_XY, CAMERA_XZ)


def wrap_angle(angle):
    """Map an angle (scalar or array) into (-pi, pi]."""
    if np.ndim(angle) == 0:
        a = float(angle)
        r = a - TWO_PI * math.ceil((a - math.pi) / TWO_PI)
        if r <= -math.pi:
            r += TWO_PI
        elif r > math.pi:
            r -= TWO_PI
        return r
    a = np.asarray(angle, dtype=float)
    r = a - TWO_PI * np.ceil((a - np.pi) / TWO_PI)
    r = np.where(r <= -np.pi, r + TWO_PI, r)
    return np.where(r > np.pi, r - TWO_PI, r)


def _orthonormalize(rotation: np.ndarray) -> np.ndarray:
    rotation = np.array(rotation, dtype=float).reshape(3, 3)
    if np.max(np.abs(rotation.T @ rotation - np.eye(3))) <= 1e-12 and abs(np.linalg.det(rotation) - 1.0) <= 1e-12:
        return rotation
    u, _, vt = np.linalg.svd(rotation)
    fixed = u @ vt
    if np.linalg.det(fixed) < 0:
        raise DataError("rotation matrix is a reflection (det < 0)")
    return fixed


@dataclass(frozen=True)
class Pose3:
    """SE(3) element stored as a rotation matrix and a translation in meters."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rot = _orthonormalize(self.rotation)
        trans = np.array(self.translation, dtype=float).reshape(3)
        rot.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls) -> Pose3:
        return cls()

    @classmethod
    def from_matrix(cls, matrix) -> Pose3:
        m = np.asarray(matrix, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_quaternion(cls, translation, quat_xyzw) -> Pose3:
        """Build a pose from a unit quaternion in (qx, qy, qz, qw) order."""
        q = np.asarray(quat_xyzw, dtype=float)
        q = q / np.linalg.norm(q)
        x, y, z, w = q
        rot = np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
                [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
                [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
            ]
        )
        return cls(rot, translation)

    @classmethod
    def from_yaw(cls, yaw: float, translation=(0.0, 0.0, 0.0)) -> Pose3:
        c, s = math.cos(yaw), math.sin(yaw)
        return cls(np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]), translation)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def to_quaternion(self) -> np.ndarray:
        """Unit quaternion (qx, qy, qz, qw) with qw >= 0."""
        r = self.rotation
        tr = np.trace(r)
        if tr > 0:
            s = 2.0 * math.sqrt(tr + 1.0)
            q = [(r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s, 0.25 * s]
        elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
            s = 2.0 * math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2])
            q = [0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s, (r[2, 1] - r[1, 2]) / s]
        elif r[1, 1] > r[2, 2]:
            s = 2.0 * math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2])
            q = [(r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s, (r[0, 2] - r[2, 0]) / s]
        else:
            s = 2.0 * math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1])
            q = [(r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s, (r[1, 0] - r[0, 1]) / s]
        q = np.array(q)
        q /= np.linalg.norm(q)
        return -q if q[3] < 0 else q

    def inverse(self) -> Pose3:
        rt = self.rotation.T
        return Pose3(rt, -rt @ self.translation)

    def compose(self, other: Pose3) -> Pose3:
        """Return self * other."""
        return Pose3(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    __matmul__ = compose

    def transform_point(self, point) -> np.ndarray:
        return self.rotation @ np.asarray(point, dtype=float) + self.translation

    def rotation_angle(self) -> float:
        """Rotation magnitude in radians."""
        c = (np.trace(self.rotation) - 1.0) / 2.0
        return math.acos(min(1.0, max(-1.0, c)))

    def allclose(self, other: Pose3, atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, rtol=0, atol=atol)
            and np.allclose(self.translation, other.translation, rtol=0, atol=atol)
        )


@dataclass(frozen=True)
class Motion3:
    """World-centric frame-to-frame motion; left-multiplies the previous pose."""

    transform: Pose3 = field(default_factory=Pose3)

    @classmethod
    def identity(cls) -> Motion3:
        return cls()

    @classmethod
    def between(cls, prev_pose: Pose3, pose: Pose3) -> Motion3:
        """The motion that carries ``prev_pose`` onto ``pose``."""
        return cls(pose.compose(prev_pose.inverse()))

    def inverse(self) -> Motion3:
        return Motion3(self.transform.inverse())


@dataclass(frozen=True)
class Pose2:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", wrap_angle(self.heading))


def recover_pose(motion: Motion3, prev_pose: Pose3) -> Pose3:
    return motion.transform.compose(prev_pose)


def recover_track(motions, initial_pose: Pose3) -> list[Pose3]:
    motions = list(motions)
    if not motions:
        raise EmptyInputError("recover_track needs at least one motion")
    poses = [initial_pose]
    for motion in motions:
        poses.append(recover_pose(motion, poses[-1]))
    return poses


def planar_components(point, forward, convention: str):
    """Planar (x, y, heading) of a 3D point and a 3D forward direction.

    ``world-xy`` drops z. ``camera-xz`` treats the frame as x right, y down,
    z forward and maps it to a planar (forward, left) frame: (z, -x).
    """
    if convention == WORLD_XY:
        return point[0], point[1], math.atan2(forward[1], forward[0])
    if convention == CAMERA_XZ:
        return point[2], -point[0], math.atan2(-forward[0], forward[2])
    raise ConfigurationError(f"unknown axis convention {convention!r}; expected one of {CONVENTIONS}")


def project_to_plane(pose: Pose3, convention: str = WORLD_XY) -> Pose2:
    # The body x-axis is taken as the object's forward direction.
    x, y, heading = planar_components(pose.translation, pose.rotation[:, 0], convention)
    return Pose2(float(x), float(y), heading)


def camera_object_pose(location, rotation_y: float) -> Pose3:
    """Object pose in a camera frame from a KITTI-style location and yaw about camera y."""
    c, s = math.cos(rotation_y), math.sin(rotation_y)
    rot = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    return Pose3(rot, location)
