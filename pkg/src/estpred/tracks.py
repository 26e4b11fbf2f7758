"""Planar track containers and the canonical 2D state file."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, InputError, ParseError
from .geom import wrap_angle

SOURCE_TAGS = ("estimated", "gt", "gt_ekf", "synthetic")
STATE_HEADER = ("frame", "object_id", "x", "y", "heading", "speed")


@dataclass(frozen=True)
class FrameClock:
    rate_hz: float = 20.0

    def __post_init__(self):
        if not self.rate_hz > 0:
            raise InputError(f"frame rate must be positive, got {self.rate_hz}")

    @property
    def dt(self) -> float:
        return 1.0 / self.rate_hz


@dataclass(frozen=True)
class AgentState2:
    frame: int
    x: float
    y: float
    heading: float = 0.0
    speed: float = 0.0

    def __post_init__(self):
        if self.speed < 0:
            raise DataError(f"negative speed {self.speed} at frame {self.frame}")
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class StateSeries:
    """A run of planar states stored column-wise.

    Used both for track segments (contiguous frames) and for the history and
    truth parts of a prediction instance.
    """

    frames: np.ndarray
    xy: np.ndarray
    heading: np.ndarray
    speed: np.ndarray

    def __post_init__(self):
        frames = _frozen(self.frames, dtype=np.int64).reshape(-1)
        n = len(frames)
        xy = _frozen(self.xy).reshape(n, 2)
        heading = _frozen(wrap_angle(np.asarray(self.heading, dtype=float).reshape(n)))
        speed = _frozen(self.speed).reshape(n)
        if np.any(speed < 0):
            raise DataError("speed channel must be non-negative")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "heading", heading)
        object.__setattr__(self, "speed", speed)

    @classmethod
    def from_states(cls, states) -> StateSeries:
        states = list(states)
        return cls(
            [s.frame for s in states],
            np.array([[s.x, s.y] for s in states], dtype=float).reshape(-1, 2),
            [s.heading for s in states],
            [s.speed for s in states],
        )

    def __len__(self) -> int:
        return len(self.frames)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return StateSeries(self.frames[i], self.xy[i], self.heading[i], self.speed[i])
        return AgentState2(int(self.frames[i]), float(self.xy[i, 0]), float(self.xy[i, 1]),
                           float(self.heading[i]), float(self.speed[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def is_contiguous(self) -> bool:
        return bool(np.all(np.diff(self.frames) == 1))

    def replace(self, **changes) -> StateSeries:
        fields = dict(frames=self.frames, xy=self.xy, heading=self.heading, speed=self.speed)
        fields.update(changes)
        return StateSeries(**fields)

    def equals(self, other: StateSeries, atol: float = 0.0) -> bool:
        return (
            len(self) == len(other)
            and np.array_equal(self.frames, other.frames)
            and np.allclose(self.xy, other.xy, rtol=0, atol=atol)
            and np.allclose(self.heading, other.heading, rtol=0, atol=atol)
            and np.allclose(self.speed, other.speed, rtol=0, atol=atol)
        )


@dataclass(frozen=True, eq=False)
class Track:
    object_id: int
    source_tag: str
    segments: list = field(default_factory=list)

    def __post_init__(self):
        if self.source_tag not in SOURCE_TAGS:
            raise InputError(f"unknown source tag {self.source_tag!r}; expected one of {SOURCE_TAGS}")
        segs = list(self.segments)
        last = None
        for seg in segs:
            if len(seg) == 0:
                raise DataError(f"object {self.object_id}: empty segment")
            if not seg.is_contiguous():
                raise DataError(f"object {self.object_id}: segment frames are not consecutive")
            if last is not None and seg.frames[0] <= last + 1:
                raise DataError(f"object {self.object_id}: segments overlap, touch or are out of order")
            last = seg.frames[-1]
        object.__setattr__(self, "segments", segs)

    @property
    def frames(self) -> np.ndarray:
        if not self.segments:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([s.frames for s in self.segments])

    def __len__(self) -> int:
        return sum(len(s) for s in self.segments)

    def states(self) -> list[AgentState2]:
        return [st for seg in self.segments for st in seg]

    def with_segments(self, segments, source_tag=None) -> Track:
        return Track(self.object_id, source_tag or self.source_tag, segments)

    def restrict(self, frames) -> Track:
        """Keep only the given frames, re-splitting into contiguous segments."""
        keep = set(int(f) for f in frames)
        segs = []
        for seg in self.segments:
            mask = np.array([int(f) in keep for f in seg.frames], dtype=bool)
            if mask.any():
                sub = StateSeries(seg.frames[mask], seg.xy[mask], seg.heading[mask], seg.speed[mask])
                segs.extend(split_contiguous(sub))
        return self.with_segments(segs)

    def equals(self, other: Track, atol: float = 0.0) -> bool:
        return (
            self.object_id == other.object_id
            and self.source_tag == other.source_tag
            and len(self.segments) == len(other.segments)
            and all(a.equals(b, atol) for a, b in zip(self.segments, other.segments))
        )


def split_contiguous(series: StateSeries) -> list[StateSeries]:
    """Split a frame-sorted series wherever consecutive frames differ by more than one."""
    if len(series) == 0:
        return []
    if np.any(np.diff(series.frames) <= 0):
        raise DataError("frames must be strictly increasing")
    breaks = np.flatnonzero(np.diff(series.frames) != 1) + 1
    bounds = [0, *breaks.tolist(), len(series)]
    return [series[a:b] for a, b in zip(bounds[:-1], bounds[1:])]


def _fmt(v: float) -> str:
    # shortest repr round-trips doubles exactly
    return repr(float(v))


def write_state_file(path, tracks) -> None:
    """Write tracks as a canonical 2D state CSV, ordered by object then frame."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATE_HEADER)
        for track in sorted(tracks, key=lambda t: t.object_id):
            for seg in track.segments:
                for i in range(len(seg)):
                    w.writerow([int(seg.frames[i]), track.object_id, _fmt(seg.xy[i, 0]), _fmt(seg.xy[i, 1]),
                                _fmt(seg.heading[i]), _fmt(seg.speed[i])])


def read_state_file(path, source_tag: str = "estimated") -> list[Track]:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such state file: {path}")
    rows: dict[int, list] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if tuple(h.strip() for h in header) != STATE_HEADER:
            raise ParseError(f"expected header {','.join(STATE_HEADER)}", line=1, path=path)
        for lineno, row in enumerate(reader, start=2):
            if not row or row[0].startswith("#"):
                continue
            if len(row) != len(STATE_HEADER):
                raise ParseError(f"expected {len(STATE_HEADER)} fields, got {len(row)}", line=lineno, path=path)
            try:
                frame, oid = int(row[0]), int(row[1])
                vals = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno, path=path) from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError("non-finite value", line=lineno, path=path)
            rows.setdefault(oid, []).append((frame, *vals))
    tracks = []
    for oid in sorted(rows):
        data = sorted(rows[oid])
        frames = [r[0] for r in data]
        if len(set(frames)) != len(frames):
            raise DataError(f"{path}: object {oid} has duplicate frames")
        arr = np.array([r[1:] for r in data], dtype=float)
        series = StateSeries(frames, arr[:, 0:2], arr[:, 2], arr[:, 3])
        tracks.append(Track(oid, source_tag, split_contiguous(series)))
    return tracks
