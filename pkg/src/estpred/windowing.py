"""Eligibility and sliding prediction instances over contiguous track segments."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FormatError, InputError, ParseError
from .tracks import AgentState2, StateSeries, Track

INSTANCE_HEADER = ("object_id", "anchor_frame", "source_tag", "role", "frame", "x", "y", "heading", "speed")
ROLES = ("history", "anchor", "truth")


@dataclass(frozen=True)
class WindowSpec:
    min_history: int = 1
    max_history: int = 6
    horizon: int = 30

    def __post_init__(self):
        if not 1 <= self.min_history <= self.max_history:
            raise ConfigurationError("need 1 <= min_history <= max_history")
        if self.horizon < 1:
            raise ConfigurationError("horizon must be at least 1")

    @property
    def min_length(self) -> int:
        """Shortest eligible segment: history, the current frame, and the horizon."""
        return self.min_history + 1 + self.horizon

    def instance_count(self, n: int) -> int:
        return max(0, n - self.horizon - self.min_history)


@dataclass(frozen=True, eq=False)
class PredictionInstance:
    """One forecasting window.

    ``history`` holds the frames strictly before the anchor, oldest first.
    """

    object_id: int
    anchor_frame: int
    history: StateSeries
    anchor: AgentState2
    future_truth: StateSeries
    source_tag: str = "estimated"

    @property
    def key(self) -> tuple:
        return (self.object_id, self.anchor_frame)

    @property
    def horizon(self) -> int:
        return len(self.future_truth)

    def observed(self) -> StateSeries:
        """History followed by the anchor state."""
        return StateSeries(
            np.r_[self.history.frames, self.anchor.frame],
            np.vstack([self.history.xy, [[self.anchor.x, self.anchor.y]]]),
            np.r_[self.history.heading, self.anchor.heading],
            np.r_[self.history.speed, self.anchor.speed],
        )


def eligible(track: Track, spec: WindowSpec | None = None) -> list[bool]:
    spec = spec or WindowSpec()
    return [len(seg) >= spec.min_length for seg in track.segments]


def make_instances(track: Track, spec: WindowSpec | None = None) -> list[PredictionInstance]:
    spec = spec or WindowSpec()
    out = []
    for seg in track.segments:
        n = len(seg)
        for a in range(spec.min_history, n - spec.horizon):
            out.append(PredictionInstance(
                object_id=track.object_id,
                anchor_frame=int(seg.frames[a]),
                history=seg[max(0, a - spec.max_history):a],
                anchor=seg[a],
                future_truth=seg[a + 1:a + 1 + spec.horizon],
                source_tag=track.source_tag,
            ))
    return out


def consecutive_pairs(instances) -> list[tuple]:
    """Pairs of instances of one object whose anchors are one frame apart."""
    by_key = {inst.key: inst for inst in instances}
    return [(inst, by_key[(inst.object_id, inst.anchor_frame + 1)])
            for inst in instances if (inst.object_id, inst.anchor_frame + 1) in by_key]


def write_instances(path, instances) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(INSTANCE_HEADER)
        for inst in instances:
            parts = [("history", s) for s in inst.history] + [("anchor", inst.anchor)]
            parts += [("truth", s) for s in inst.future_truth]
            for role, s in parts:
                w.writerow([inst.object_id, inst.anchor_frame, inst.source_tag, role, s.frame,
                            repr(s.x), repr(s.y), repr(s.heading), repr(s.speed)])


def read_instances(path) -> list[PredictionInstance]:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such instance file: {path}")
    groups: dict[tuple, dict] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if tuple(header) != INSTANCE_HEADER:
            raise ParseError(f"expected header {','.join(INSTANCE_HEADER)}", line=1, path=path)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(INSTANCE_HEADER):
                raise ParseError(f"expected {len(INSTANCE_HEADER)} fields", line=lineno, path=path)
            try:
                key = (int(row[0]), int(row[1]))
                role = row[3]
                state = AgentState2(int(row[4]), float(row[5]), float(row[6]), float(row[7]), float(row[8]))
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno, path=path) from None
            if role not in ROLES:
                raise ParseError(f"unknown role {role!r}", line=lineno, path=path)
            g = groups.setdefault(key, {"source_tag": row[2], "history": [], "anchor": [], "truth": []})
            g[role].append(state)
    out = []
    for key, g in groups.items():
        if len(g["anchor"]) != 1:
            raise FormatError(f"instance {key} must have exactly one anchor row")
        out.append(PredictionInstance(key[0], key[1], StateSeries.from_states(g["history"]), g["anchor"][0],
                                      StateSeries.from_states(g["truth"]), g["source_tag"]))
    return out
