"""Kinematic baseline predictors and the file exchange for external predictors."""
from __future__ import annotations

import csv
import math
import os
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, CoverageError, FormatError, InputError, ParseError
from .geom import wrap_angle
from .tracks import FrameClock
from .windowing import PredictionInstance, read_instances, write_instances

PREDICTION_HEADER = ("object_id", "anchor_frame", "step", "x", "y")
FITTED = "fitted"


@dataclass(frozen=True)
class ControlLimits:
    max_turn_rate: float = 0.7  # rad/s
    max_accel: float = 4.0  # m/s^2

    def __post_init__(self):
        if not (self.max_turn_rate > 0 and self.max_accel > 0):
            raise ConfigurationError("control limits must be strictly positive")


@dataclass(frozen=True, eq=False)
class PredictedTrajectory:
    object_id: int
    anchor_frame: int
    points: np.ndarray
    predictor_tag: str = ""
    rollout: np.ndarray | None = None  # (T+1, 4) x, y, heading, speed from the anchor on

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 2)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def key(self) -> tuple:
        return (self.object_id, self.anchor_frame)

    @property
    def horizon(self) -> int:
        return len(self.points)


def predict_constant_velocity(instance: PredictionInstance, clock: FrameClock | None = None,
                              horizon: int | None = None) -> PredictedTrajectory:
    """Extrapolate the last observed displacement; zero velocity with a single state."""
    horizon = horizon or instance.horizon
    obs = instance.observed().xy
    step = obs[-1] - obs[-2] if len(obs) >= 2 else np.zeros(2)
    t = np.arange(1, horizon + 1, dtype=float)[:, None]
    return PredictedTrajectory(instance.object_id, instance.anchor_frame, obs[-1] + t * step, "constant_velocity")


def fit_constant_controls(instance: PredictionInstance, clock: FrameClock) -> tuple[float, float]:
    """Least-squares constant (accel, turn rate) from observed speed and wrapped heading steps."""
    obs = instance.observed()
    if len(obs) < 2:
        return 0.0, 0.0
    dv = np.diff(obs.speed)
    dth = wrap_angle(np.diff(obs.heading))
    return float(dv.mean() / clock.dt), float(dth.mean() / clock.dt)


def predict_unicycle(instance: PredictionInstance, controls=None, limits: ControlLimits | None = None,
                     clock: FrameClock | None = None, horizon: int | None = None) -> PredictedTrajectory:
    """Explicit-Euler rollout of a dynamically-extended unicycle from the anchor state.

    ``controls`` is None (zero inputs), ``"fitted"`` (one constant pair fitted
    to the history and held), or a per-step ``(accel, turn_rate)`` sequence.
    Every control is clamped to ``limits`` before it is applied.
    """
    limits = limits or ControlLimits()
    clock = clock or FrameClock()
    horizon = horizon or instance.horizon
    if controls is None:
        u = np.zeros((horizon, 2))
    elif isinstance(controls, str):
        if controls != FITTED:
            raise ConfigurationError(f"unknown control mode {controls!r}")
        u = np.tile(fit_constant_controls(instance, clock), (horizon, 1))
    else:
        u = np.asarray(controls, dtype=float).reshape(-1, 2)
        if len(u) != horizon:
            raise InputError(f"expected {horizon} control steps, got {len(u)}")
    accel = np.clip(u[:, 0], -limits.max_accel, limits.max_accel)
    turn = np.clip(u[:, 1], -limits.max_turn_rate, limits.max_turn_rate)
    dt = clock.dt
    a0 = instance.anchor
    x, y, th, v = a0.x, a0.y, a0.heading, a0.speed
    rollout = np.empty((horizon + 1, 4))
    rollout[0] = x, y, th, v
    for k in range(horizon):
        th = th + turn[k] * dt
        v = max(0.0, v + accel[k] * dt)
        x = x + v * math.cos(th) * dt
        y = y + v * math.sin(th) * dt
        rollout[k + 1] = x, y, th, v
    return PredictedTrajectory(instance.object_id, instance.anchor_frame, rollout[1:, :2], "unicycle", rollout)


def write_predictions(path, predictions) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PREDICTION_HEADER)
        for p in predictions:
            for step, (x, y) in enumerate(p.points, start=1):
                w.writerow([p.object_id, p.anchor_frame, step, repr(float(x)), repr(float(y))])


def read_predictions(path, expected_keys=None, horizon: int = 30, tag: str = "external") -> list[PredictedTrajectory]:
    """Read a prediction exchange file and check coverage and point counts.

    Every expected (object_id, anchor_frame) key must be present with steps
    1..horizon exactly once; keys nobody asked for are rejected too.
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such prediction file: {path}")
    groups: dict[tuple, dict] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != PREDICTION_HEADER:
            raise ParseError(f"expected header {','.join(PREDICTION_HEADER)}", line=1, path=path)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(PREDICTION_HEADER):
                raise ParseError(f"expected {len(PREDICTION_HEADER)} fields", line=lineno, path=path)
            try:
                key = (int(row[0]), int(row[1]))
                step = int(row[2])
                xy = (float(row[3]), float(row[4]))
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno, path=path) from None
            steps = groups.setdefault(key, {})
            if step in steps:
                raise FormatError(f"prediction {key}: duplicate step {step}")
            steps[step] = xy
    if expected_keys is not None:
        expected = set(expected_keys)
        missing = sorted(expected - set(groups))
        if missing:
            raise CoverageError(f"predictions missing for instances {missing}", missing)
        extra = sorted(set(groups) - expected)
        if extra:
            raise CoverageError(f"predictions for unknown instances {extra}", extra)
    out = []
    for key in sorted(groups):
        steps = groups[key]
        if sorted(steps) != list(range(1, horizon + 1)):
            raise FormatError(f"prediction {key}: expected steps 1..{horizon}, got {len(steps)} points")
        out.append(PredictedTrajectory(key[0], key[1], [steps[s] for s in range(1, horizon + 1)], tag))
    return out


def run_external_predictor(instances, command, horizon: int = 30, env=None, workdir=None) -> list[PredictedTrajectory]:
    """Exchange one batch of instances with an external predictor process.

    The command is run as ``command + [instances_csv, predictions_csv]``; it
    must write the prediction exchange file to the second path. ``instances``
    is either a list of PredictionInstance or a path to an existing
    instance export.
    """
    command = list(command)
    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        tmp = Path(tmp)
        if isinstance(instances, (str, os.PathLike)):
            inst_path = Path(instances)
            keys = [i.key for i in read_instances(inst_path)]
        else:
            inst_path = tmp / "instances.csv"
            write_instances(inst_path, instances)
            keys = [i.key for i in instances]
        pred_path = tmp / "predictions.csv"
        proc = subprocess.run(command + [str(inst_path), str(pred_path)], capture_output=True, text=True,
                              env={**os.environ, **(env or {})})
        if proc.returncode != 0:
            raise InputError(f"external predictor exited with {proc.returncode}: {proc.stderr.strip()}")
        return read_predictions(pred_path, keys, horizon)
