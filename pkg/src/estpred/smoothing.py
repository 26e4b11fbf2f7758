"""Forward extended Kalman filter over a planar unicycle state (x, y, heading, speed)."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InputError, NumericalError
from .geom import wrap_angle
from .tracks import FrameClock, StateSeries, Track


@dataclass(frozen=True)
class EkfConfig:
    accel_std: float = 2.0  # m/s^2
    turn_rate_std: float = 0.5  # rad/s
    position_std: float = 0.3  # m
    heading_std: float | None = 0.2  # rad; None disables the heading channel
    initial_covariance: tuple = (1.0, 1.0, 0.5, 4.0)

    def __post_init__(self):
        stds = [self.accel_std, self.turn_rate_std, self.position_std]
        if self.heading_std is not None:
            stds.append(self.heading_std)
        if not all(s > 0 for s in stds):
            raise ConfigurationError("EKF standard deviations must be positive")
        cov = tuple(float(c) for c in self.initial_covariance)
        if len(cov) != 4 or not all(c > 0 for c in cov):
            raise ConfigurationError("initial_covariance must be four positive numbers")
        object.__setattr__(self, "initial_covariance", cov)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["initial_covariance"] = list(self.initial_covariance)
        return d

    @classmethod
    def from_file(cls, path) -> EkfConfig:
        """Read ``key = value`` lines; ``heading_std = none`` disables the heading channel."""
        path = Path(path)
        if not path.is_file():
            raise InputError(f"no such EKF config file: {path}")
        known = {f.name for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:line {lineno}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ConfigurationError(f"{path}:line {lineno}: unknown key {key!r}")
            try:
                if key == "initial_covariance":
                    values[key] = tuple(float(v) for v in val.replace(",", " ").split())
                elif key == "heading_std" and val.lower() in ("none", "off", ""):
                    values[key] = None
                else:
                    values[key] = float(val)
            except ValueError:
                raise ConfigurationError(f"{path}:line {lineno}: bad value {val!r}") from None
        return cls(**values)


@dataclass
class EkfState:
    mean: np.ndarray
    covariance: np.ndarray


class UnicycleEKF:
    """Constant-speed, constant-heading process with acceleration and turn-rate noise."""

    def __init__(self, config: EkfConfig | None = None, clock: FrameClock | None = None):
        self.config = config or EkfConfig()
        self.clock = clock or FrameClock()
        self.state: EkfState | None = None
        self.frame = None

    def initialize(self, x, y, heading, speed, frame=None):
        self.state = EkfState(np.array([x, y, wrap_angle(heading), speed], dtype=float),
                              np.diag(self.config.initial_covariance).astype(float))
        self.frame = frame

    def predict(self):
        dt = self.clock.dt
        x, y, th, v = self.state.mean
        c, s = math.cos(th), math.sin(th)
        mean = np.array([x + v * c * dt, y + v * s * dt, th, v])
        F = np.array([
            [1.0, 0.0, -v * s * dt, c * dt],
            [0.0, 1.0, v * c * dt, s * dt],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ])
        G = np.array([
            [0.5 * dt * dt * c, 0.0],
            [0.5 * dt * dt * s, 0.0],
            [0.0, dt],
            [dt, 0.0],
        ])
        q = np.diag([self.config.accel_std ** 2, self.config.turn_rate_std ** 2])
        P = F @ self.state.covariance @ F.T + G @ q @ G.T
        self.state = EkfState(mean, self._checked(P))
        if self.frame is not None:
            self.frame += 1

    def update(self, xy, heading=None) -> np.ndarray:
        """Fuse a position (and optional heading) measurement; returns the innovation."""
        use_heading = heading is not None and self.config.heading_std is not None
        m = self.state.mean
        if use_heading:
            H = np.zeros((3, 4))
            H[0, 0] = H[1, 1] = H[2, 2] = 1.0
            innov = np.array([xy[0] - m[0], xy[1] - m[1], wrap_angle(heading - m[2])])
            R = np.diag([self.config.position_std ** 2] * 2 + [self.config.heading_std ** 2])
        else:
            H = np.zeros((2, 4))
            H[0, 0] = H[1, 1] = 1.0
            innov = np.array([xy[0] - m[0], xy[1] - m[1]])
            R = np.diag([self.config.position_std ** 2] * 2)
        P = self.state.covariance
        S = H @ P @ H.T + R
        K = np.linalg.solve(S, H @ P).T
        mean = m + K @ innov
        mean[2] = wrap_angle(mean[2])
        IKH = np.eye(4) - K @ H
        P = IKH @ P @ IKH.T + K @ R @ K.T  # Joseph form
        self.state = EkfState(mean, self._checked(P))
        return innov

    def _checked(self, P):
        P = 0.5 * (P + P.T)
        try:
            np.linalg.cholesky(P)
        except np.linalg.LinAlgError:
            raise NumericalError("EKF covariance lost positive-definiteness", frame=self.frame) from None
        return P


def _filter_segment(seg: StateSeries, config: EkfConfig, clock: FrameClock) -> StateSeries:
    ekf = UnicycleEKF(config, clock)
    ekf.initialize(seg.xy[0, 0], seg.xy[0, 1], seg.heading[0], seg.speed[0], frame=int(seg.frames[0]))
    if len(seg) == 1:
        return seg
    means = np.empty((len(seg), 4))
    means[0] = ekf.state.mean
    for i in range(1, len(seg)):
        ekf.predict()
        ekf.update(seg.xy[i], seg.heading[i])
        means[i] = ekf.state.mean
    heading = means[:, 2]
    speed = means[:, 3]
    backwards = speed < 0
    heading = np.where(backwards, wrap_angle(heading + math.pi), heading)
    return StateSeries(seg.frames, means[:, :2], heading, np.abs(speed))


def ekf_smooth(track: Track, config: EkfConfig | None = None, clock: FrameClock | None = None) -> Track:
    """Filter every segment independently; the result is tagged ``gt_ekf``."""
    config = config or EkfConfig()
    clock = clock or FrameClock()
    return track.with_segments([_filter_segment(s, config, clock) for s in track.segments], source_tag="gt_ekf")
