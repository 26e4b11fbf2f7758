"""Readers for ground-truth labels and estimator output, plus kinematic channels."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CalibrationError, DataError, InputError, ParseError
from .geom import (
    CAMERA_XZ,
    WORLD_XY,
    Motion3,
    Pose3,
    camera_object_pose,
    project_to_plane,
    recover_pose,
)
from .tracks import FrameClock, StateSeries, Track, split_contiguous

log = logging.getLogger(__name__)

EPS_MOVE = 0.01  # m per frame; below this the heading is carried forward
QUAT_NORM_TOL = 1e-3
MOTION_CONSISTENCY_TOL = 1e-3  # m

HEADING_PROVIDED = "provided"
HEADING_DIFFERENCED = "differenced"

KITTI_VEHICLE_TYPES = ("Car", "Van", "Truck")


@dataclass(frozen=True)
class KittiRecord:
    frame: int
    track_id: int
    obj_type: str
    truncated: float
    occluded: int
    location: tuple
    rotation_y: float
    dimensions: tuple = (0.0, 0.0, 0.0)
    score: float | None = None


def parse_kitti_tracking_labels(path, clock: FrameClock | None = None, types=None) -> dict[int, list[KittiRecord]]:
    """Read a KITTI tracking label file into per-object records.

    Columns: frame, track_id, type, truncated, occluded, alpha, bbox (4),
    dimensions h w l (3), location x y z (3), rotation_y, optional score.
    ``DontCare`` rows are always dropped; ``types`` restricts the rest.
    ``clock`` is accepted for interface symmetry and is not used for parsing.
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such label file: {path}")
    wanted = None if types is None else set(types)
    out: dict[int, list[KittiRecord]] = {}
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) not in (17, 18):
                raise ParseError(f"expected 17 or 18 fields, got {len(fields)}", line=lineno, path=path)
            try:
                frame, tid = int(fields[0]), int(fields[1])
                obj_type = fields[2]
                truncated = float(fields[3])
                occluded = int(float(fields[4]))
                nums = [float(v) for v in fields[5:17]]
                score = float(fields[17]) if len(fields) == 18 else None
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno, path=path) from None
            if obj_type == "DontCare" or (wanted is not None and obj_type not in wanted):
                continue
            rec = KittiRecord(
                frame=frame,
                track_id=tid,
                obj_type=obj_type,
                truncated=truncated,
                occluded=occluded,
                dimensions=tuple(nums[5:8]),
                location=tuple(nums[8:11]),
                rotation_y=nums[11],
                score=score,
            )
            recs = out.setdefault(tid, [])
            if recs and frame <= recs[-1].frame:
                raise DataError(f"{path}:line {lineno}: frames for object {tid} are not increasing "
                                f"({recs[-1].frame} then {frame})")
            recs.append(rec)
    return out


@dataclass
class SceneBundle:
    """Estimator output for one sequence: camera poses, object poses and motions."""

    camera_poses: dict = field(default_factory=dict)
    object_poses: dict = field(default_factory=dict)
    object_motions: dict = field(default_factory=dict)
    clock: FrameClock = field(default_factory=FrameClock)
    warnings: list = field(default_factory=list)


def _read_pose_rows(path: Path) -> dict[int, dict[int, Pose3]]:
    if not path.is_file():
        raise InputError(f"no such pose file: {path}")
    out: dict[int, dict[int, Pose3]] = {}
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            fields = text.split()
            if len(fields) != 9:
                raise ParseError(f"expected 9 fields (frame object_id tx ty tz qx qy qz qw), got {len(fields)}",
                                 line=lineno, path=path)
            try:
                frame, oid = int(fields[0]), int(fields[1])
                vals = np.array([float(v) for v in fields[2:]])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno, path=path) from None
            norm = np.linalg.norm(vals[3:])
            if abs(norm - 1.0) > QUAT_NORM_TOL:
                raise DataError(f"{path}:line {lineno}: quaternion norm {norm:.6g} is not unit")
            per_obj = out.setdefault(oid, {})
            if frame in per_obj:
                raise DataError(f"{path}:line {lineno}: duplicate frame {frame} for object {oid}")
            per_obj[frame] = Pose3.from_quaternion(vals[:3], vals[3:])
    return out


def parse_estimator_tracks(pose_file, clock: FrameClock | None = None, motion_file=None) -> SceneBundle:
    """Read estimator poses (and optional motions) into a SceneBundle.

    Object id 0 holds the camera. A motion row at frame k is the world-centric
    motion from k-1 to k; it must have poses at both frames and is checked
    against them.
    """
    clock = clock or FrameClock()
    poses = _read_pose_rows(Path(pose_file))
    bundle = SceneBundle(clock=clock)
    bundle.camera_poses = dict(sorted(poses.pop(0, {}).items()))
    bundle.object_poses = {oid: dict(sorted(p.items())) for oid, p in sorted(poses.items())}
    if motion_file is None:
        return bundle
    motions = _read_pose_rows(Path(motion_file))
    for oid, per_frame in sorted(motions.items()):
        obj_poses = bundle.camera_poses if oid == 0 else bundle.object_poses.get(oid, {})
        checked = {}
        for k, transform in sorted(per_frame.items()):
            if k - 1 not in obj_poses or k not in obj_poses:
                raise DataError(f"motion for object {oid} at frame {k} has no pose pair ({k - 1}, {k})")
            motion = Motion3(transform)
            predicted = recover_pose(motion, obj_poses[k - 1])
            err = float(np.linalg.norm(predicted.translation - obj_poses[k].translation))
            if err > MOTION_CONSISTENCY_TOL:
                msg = f"object {oid} frame {k}: motion/pose inconsistency {err:.6g} m"
                bundle.warnings.append(msg)
                log.warning(msg)
            checked[k] = motion
        bundle.object_motions[oid] = checked
    return bundle


def write_pose_file(path, poses_by_object: dict) -> None:
    """Write ``{object_id: {frame: Pose3}}`` in the canonical pose row format."""
    with Path(path).open("w") as fh:
        fh.write("# frame object_id tx ty tz qx qy qz qw\n")
        for oid in sorted(poses_by_object):
            for frame in sorted(poses_by_object[oid]):
                p = poses_by_object[oid][frame]
                if isinstance(p, Motion3):
                    p = p.transform
                vals = [*p.translation, *p.to_quaternion()]
                fh.write(f"{frame} {oid} " + " ".join(repr(float(v)) for v in vals) + "\n")


def _run_kinematics(xy: np.ndarray, clock: FrameClock, heading: np.ndarray | None):
    n = len(xy)
    if n == 1:
        return (np.zeros(1) if heading is None else heading.copy()), np.zeros(1)
    step = np.gradient(xy, axis=0)  # central inside, one-sided at the ends
    speed = np.hypot(step[:, 0], step[:, 1]) * clock.rate_hz
    if heading is not None:
        return heading.copy(), speed
    out = np.zeros(n)
    valid = np.hypot(step[:, 0], step[:, 1]) >= EPS_MOVE
    if not valid.any():
        return out, speed
    first = int(np.argmax(valid))
    current = math.atan2(step[first, 1], step[first, 0])
    for i in range(n):
        if valid[i]:
            current = math.atan2(step[i, 1], step[i, 0])
        out[i] = current
    return out, speed


def derive_kinematics(frames, positions, clock: FrameClock | None = None,
                      heading_source: str = HEADING_DIFFERENCED, provided_heading=None) -> StateSeries:
    """Fill speed and heading channels for frame-indexed planar positions.

    Differences never cross a frame gap; each contiguous run is handled on
    its own.
    """
    clock = clock or FrameClock()
    frames = np.asarray(frames, dtype=np.int64).reshape(-1)
    xy = np.asarray(positions, dtype=float).reshape(-1, 2)
    if len(frames) != len(xy):
        raise InputError("frames and positions differ in length")
    if len(frames) == 0:
        raise InputError("derive_kinematics needs at least one position")
    if heading_source == HEADING_PROVIDED:
        if provided_heading is None:
            raise InputError("heading_source=provided needs a heading series")
        provided = np.asarray(provided_heading, dtype=float).reshape(-1)
        if len(provided) != len(frames):
            raise InputError("provided heading series differs in length from positions")
    elif heading_source == HEADING_DIFFERENCED:
        provided = None
    else:
        raise InputError(f"unknown heading source {heading_source!r}")
    order = np.argsort(frames, kind="stable")
    frames, xy = frames[order], xy[order]
    if provided is not None:
        provided = provided[order]
    heading = np.zeros(len(frames))
    speed = np.zeros(len(frames))
    breaks = np.flatnonzero(np.diff(frames) != 1) + 1
    bounds = [0, *breaks.tolist(), len(frames)]
    for a, b in zip(bounds[:-1], bounds[1:]):
        h, v = _run_kinematics(xy[a:b], clock, None if provided is None else provided[a:b])
        heading[a:b] = h
        speed[a:b] = v
    return StateSeries(frames, xy, heading, speed)


def to_world_track(records, camera_poses: dict, convention: str = CAMERA_XZ, clock: FrameClock | None = None,
                   heading_source: str = HEADING_PROVIDED, source_tag: str = "gt") -> Track:
    """Move camera-frame label records into the world frame and project them to the plane."""
    records = list(records)
    if not records:
        raise InputError("to_world_track needs at least one record")
    missing = sorted({r.frame for r in records if r.frame not in camera_poses})
    if missing:
        raise DataError(f"no camera pose for frames {missing}")
    frames, xy, heading = [], [], []
    for r in records:
        world = camera_poses[r.frame].compose(camera_object_pose(r.location, r.rotation_y))
        p2 = project_to_plane(world, convention)
        frames.append(r.frame)
        xy.append((p2.x, p2.y))
        heading.append(p2.heading)
    series = derive_kinematics(frames, xy, clock, heading_source,
                               heading if heading_source == HEADING_PROVIDED else None)
    return Track(records[0].track_id, source_tag, split_contiguous(series))


def estimator_track(bundle: SceneBundle, object_id: int, convention: str = WORLD_XY,
                    heading_source: str = HEADING_DIFFERENCED) -> Track:
    """Planar track of one estimated object.

    Heading defaults to differencing because estimator object frames carry no
    guaranteed forward axis.
    """
    poses = bundle.object_poses.get(object_id)
    if not poses:
        raise DataError(f"object {object_id} has no poses")
    frames = sorted(poses)
    planar = [project_to_plane(poses[f], convention) for f in frames]
    series = derive_kinematics(frames, [(p.x, p.y) for p in planar], bundle.clock, heading_source,
                               [p.heading for p in planar] if heading_source == HEADING_PROVIDED else None)
    return Track(object_id, "estimated", split_contiguous(series))


def calibrate_scale(track: Track, reference_speeds) -> tuple[Track, float]:
    """Scale positions and speeds so the mean speed matches a reference profile."""
    ref = np.asarray(reference_speeds, dtype=float).reshape(-1)
    if len(track) < 2:
        raise CalibrationError("calibration needs a track with at least two states")
    if ref.size == 0 or not ref.mean() > 0:
        raise CalibrationError("reference speed profile must be non-empty with positive mean")
    track_mean = float(np.mean(np.concatenate([s.speed for s in track.segments])))
    if track_mean == 0:
        raise CalibrationError(f"object {track.object_id} never moves; cannot calibrate scale")
    scale = float(ref.mean()) / track_mean
    segs = [s.replace(xy=s.xy * scale, speed=s.speed * scale) for s in track.segments]
    return track.with_segments(segs), scale
