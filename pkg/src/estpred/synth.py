"""Noise-free unicycle trajectories and seeded Gaussian corruption.

Noise comes from numpy's PCG64 bit generator seeded with ``NoiseSpec.seed``.
For each segment, in order, ``standard_normal((n, 2))`` position draws are
taken first, then ``standard_normal(n)`` heading draws. Draws happen even
when a standard deviation is zero so streams stay aligned.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InputError
from .geom import wrap_angle
from .ingest import HEADING_DIFFERENCED, derive_kinematics
from .tracks import FrameClock, StateSeries, Track

RNG_ALGORITHM = "numpy.PCG64"


@dataclass(frozen=True)
class ControlSegment:
    duration: float  # s
    accel: float = 0.0  # m/s^2
    turn_rate: float = 0.0  # rad/s


@dataclass(frozen=True)
class MotionProfile:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0
    speed: float = 0.0
    schedule: tuple = ()
    clock: FrameClock = field(default_factory=FrameClock)

    def __post_init__(self):
        sched = tuple(self.schedule)
        if not sched:
            raise ConfigurationError("motion profile needs at least one schedule segment")
        if any(not seg.duration > 0 for seg in sched):
            raise ConfigurationError("schedule durations must be positive")
        if self.speed < 0:
            raise ConfigurationError("initial speed must be non-negative")
        object.__setattr__(self, "schedule", sched)

    @classmethod
    def from_file(cls, path) -> MotionProfile:
        """Read an INI-style profile.

        ``[initial]`` holds x, y, heading, speed; ``[clock]`` holds rate_hz;
        every section whose name starts with ``segment`` adds one schedule
        entry (duration, accel, turn_rate) in file order.
        """
        path = Path(path)
        if not path.is_file():
            raise InputError(f"no such profile file: {path}")
        cp = configparser.ConfigParser()
        try:
            cp.read_string(path.read_text(), source=str(path))
            init = cp["initial"] if cp.has_section("initial") else {}
            rate = cp.getfloat("clock", "rate_hz", fallback=20.0)
            schedule = [
                ControlSegment(cp.getfloat(sec, "duration"), cp.getfloat(sec, "accel", fallback=0.0),
                               cp.getfloat(sec, "turn_rate", fallback=0.0))
                for sec in cp.sections() if sec.startswith("segment")
            ]
            return cls(float(init.get("x", 0.0)), float(init.get("y", 0.0)), float(init.get("heading", 0.0)),
                       float(init.get("speed", 0.0)), tuple(schedule), FrameClock(rate))
        except (configparser.Error, ValueError) as exc:
            raise ConfigurationError(f"{path}: {exc}") from None

    def to_dict(self) -> dict:
        return {
            "initial": {"x": self.x, "y": self.y, "heading": self.heading, "speed": self.speed},
            "rate_hz": self.clock.rate_hz,
            "schedule": [[s.duration, s.accel, s.turn_rate] for s in self.schedule],
        }


@dataclass(frozen=True)
class NoiseSpec:
    position_std: float = 0.0
    heading_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.position_std < 0 or self.heading_std < 0:
            raise ConfigurationError("noise standard deviations must be non-negative")


def _arc(v0, a, th0, w, tau):
    """Closed-form displacement of a unicycle with constant accel and turn rate over tau."""
    if abs(w) < 1e-3:
        c, s = math.cos(th0), math.sin(th0)
        m0 = v0 * tau + a * tau ** 2 / 2
        m1 = v0 * tau ** 2 / 2 + a * tau ** 3 / 3
        m2 = v0 * tau ** 3 / 3 + a * tau ** 4 / 4
        return (c * m0 - w * s * m1 - 0.5 * w * w * c * m2,
                s * m0 + w * c * m1 - 0.5 * w * w * s * m2)
    th1 = th0 + w * tau
    v1 = v0 + a * tau
    dx = (v1 * math.sin(th1) - v0 * math.sin(th0)) / w + a * (math.cos(th1) - math.cos(th0)) / w ** 2
    dy = (-v1 * math.cos(th1) + v0 * math.cos(th0)) / w + a * (math.sin(th1) - math.sin(th0)) / w ** 2
    return dx, dy


def _step(x, y, th, v, a, w, dt):
    moving = dt
    if a < 0 and v + a * dt < 0:
        moving = -v / a  # speed reaches zero inside the step and stays there
    dx, dy = _arc(v, a, th, w, moving)
    return x + dx, y + dy, th + w * dt, max(0.0, v + a * dt)


def generate(profile: MotionProfile, object_id: int = 1, start_frame: int = 0) -> Track:
    """Exact (closed-form per frame) unicycle rollout of a control schedule."""
    dt = profile.clock.dt
    x, y, th, v = profile.x, profile.y, profile.heading, profile.speed
    rows = [(x, y, th, v)]
    for seg in profile.schedule:
        for _ in range(int(round(seg.duration * profile.clock.rate_hz))):
            x, y, th, v = _step(x, y, th, v, seg.accel, seg.turn_rate, dt)
            rows.append((x, y, th, v))
    arr = np.array(rows)
    frames = np.arange(start_frame, start_frame + len(arr))
    return Track(object_id, "synthetic", [StateSeries(frames, arr[:, :2], arr[:, 2], arr[:, 3])])


def corrupt(track: Track, noise: NoiseSpec, clock: FrameClock | None = None) -> Track:
    """Add seeded i.i.d. Gaussian noise; speed and heading are re-derived from noisy positions."""
    clock = clock or FrameClock()
    rng = np.random.Generator(np.random.PCG64(noise.seed))
    segments = []
    for seg in track.segments:
        n = len(seg)
        pos_noise = rng.standard_normal((n, 2)) * noise.position_std
        head_noise = rng.standard_normal(n) * noise.heading_std
        out = seg
        if noise.position_std > 0:
            out = derive_kinematics(seg.frames, seg.xy + pos_noise, clock, HEADING_DIFFERENCED)
        if noise.heading_std > 0:
            out = out.replace(heading=wrap_angle(out.heading + head_noise))
        segments.append(out)
    return track.with_segments(segments)
