"""Smoothness diagnostics: step distance, speed and heading series with roughness summaries."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, InputError
from .geom import wrap_angle
from .tracks import Track

SERIES = ("step_distance", "speed", "heading")


def _second_diff(x: np.ndarray) -> np.ndarray:
    return np.abs(np.diff(x, 2)) if len(x) >= 3 else np.zeros(0)


def _heading_second_diff(h: np.ndarray) -> np.ndarray:
    return np.abs(np.diff(wrap_angle(np.diff(h)))) if len(h) >= 3 else np.zeros(0)


@dataclass
class SmoothnessReport:
    """Per-segment series. ``step_distance[i]`` is the distance from frame i to i+1."""

    frames: np.ndarray
    step_distance: np.ndarray
    speed: np.ndarray
    heading: np.ndarray
    roughness: dict = field(default_factory=dict)

    def abs_second_differences(self) -> dict:
        return {
            "step_distance": _second_diff(self.step_distance),
            "speed": _second_diff(self.speed),
            "heading": _heading_second_diff(self.heading),
        }


def smoothness(track: Track) -> list[SmoothnessReport]:
    reports = []
    for seg in track.segments:
        rep = SmoothnessReport(
            frames=seg.frames.copy(),
            step_distance=np.linalg.norm(np.diff(seg.xy, axis=0), axis=1),
            speed=seg.speed.copy(),
            heading=seg.heading.copy(),
        )
        # a series too short for a second difference has no roughness
        rep.roughness = {k: (float(v.mean()) if v.size else math.nan)
                         for k, v in rep.abs_second_differences().items()}
        reports.append(rep)
    return reports


def roughness(track: Track) -> dict:
    """Track-level roughness: second differences pooled over all segments."""
    pooled = {k: [] for k in SERIES}
    for rep in smoothness(track):
        for k, v in rep.abs_second_differences().items():
            pooled[k].append(v)
    out = {}
    for k, parts in pooled.items():
        vals = np.concatenate(parts) if parts else np.zeros(0)
        out[k] = float(vals.mean()) if vals.size else math.nan
    return out


@dataclass
class SourceComparison:
    labels: list
    frames: np.ndarray
    tracks: dict
    reports: dict
    roughness: dict

    def ratio(self, label: str, reference: str) -> dict:
        return {k: self.roughness[label][k] / self.roughness[reference][k] for k in SERIES}

    def ordering(self, series: str) -> list:
        return sorted(self.labels, key=lambda lab: (self.roughness[lab][series], self.labels.index(lab)))

    def table(self) -> list[dict]:
        rows = []
        for k in SERIES:
            row = {"series": k}
            for lab in self.labels:
                row[lab] = self.roughness[lab][k]
            if len(self.labels) > 1:
                row["ordering"] = "<".join(self.ordering(k))
            rows.append(row)
        return rows


def compare_sources(tracks, labels=None) -> SourceComparison:
    """Side-by-side smoothness of several sources for one object, on their common frames."""
    tracks = list(tracks)
    if len(tracks) < 2:
        raise InputError("compare_sources needs at least two tracks")
    if len({t.object_id for t in tracks}) != 1:
        raise InputError("compared tracks must share an object id")
    labels = list(labels) if labels is not None else [t.source_tag for t in tracks]
    if len(labels) != len(tracks) or len(set(labels)) != len(labels):
        raise InputError("each compared track needs a distinct label")
    common = set(tracks[0].frames.tolist())
    for t in tracks[1:]:
        common &= set(t.frames.tolist())
    if not common:
        raise DataError(f"object {tracks[0].object_id}: sources share no frames")
    frames = np.array(sorted(common))
    restricted = {lab: t.restrict(frames) for lab, t in zip(labels, tracks)}
    return SourceComparison(
        labels=labels,
        frames=frames,
        tracks=restricted,
        reports={lab: smoothness(t) for lab, t in restricted.items()},
        roughness={lab: roughness(t) for lab, t in restricted.items()},
    )


def tidy_rows(reports_by_source: dict):
    """Yield (frame, series, source, value); step distances are stamped with the later frame."""
    for source, reports in reports_by_source.items():
        for rep in reports:
            for i, d in enumerate(rep.step_distance):
                yield int(rep.frames[i + 1]), "step_distance", source, float(d)
            for f, v in zip(rep.frames, rep.speed):
                yield int(f), "speed", source, float(v)
            for f, v in zip(rep.frames, rep.heading):
                yield int(f), "heading", source, float(v)


def write_series_csv(path, reports_by_source: dict) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "series", "source", "value"])
        for frame, series, source, value in tidy_rows(reports_by_source):
            w.writerow([frame, series, source, repr(value)])


def read_series_csv(path) -> list[tuple]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        return [(int(r["frame"]), r["series"], r["source"], float(r["value"])) for r in reader]
