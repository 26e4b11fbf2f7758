"""Displacement metrics (ADE, FDE, ACE), relative pose error, and weighted aggregation."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, DataError


@dataclass(frozen=True)
class InstanceScore:
    object_id: int
    anchor_frame: int
    ade: float
    fde: float
    ace: float | None = None  # absent for the last anchor of a segment


@dataclass(frozen=True)
class RpeScore:
    rpe_t_rmse: float  # m
    rpe_r_rmse: float  # deg
    delta: int = 1
    pairs: int = 0


def _points(p) -> np.ndarray:
    return np.asarray(getattr(p, "points", p), dtype=float).reshape(-1, 2)


def _paired(pred, truth):
    a, b = _points(pred), _points(truth)
    if len(a) != len(b):
        raise ContractError(f"prediction has {len(a)} points but truth has {len(b)}")
    if len(a) == 0:
        raise ContractError("trajectories must have at least one point")
    return a, b


def ade(pred, truth) -> float:
    a, b = _paired(pred, truth)
    return float(np.mean(np.linalg.norm(a - b, axis=1)))


def fde(pred, truth) -> float:
    a, b = _paired(pred, truth)
    return float(np.linalg.norm(a[-1] - b[-1]))


def ace(pred_at_s, pred_at_s_plus_1) -> float:
    """Distance between two forecasts of the same absolute frame s+T.

    The anchor-s forecast contributes its final point; the anchor-(s+1)
    forecast its second-to-last point.
    """
    if pred_at_s.object_id != pred_at_s_plus_1.object_id:
        raise ContractError("ACE needs two predictions of the same object")
    if pred_at_s_plus_1.anchor_frame != pred_at_s.anchor_frame + 1:
        raise ContractError(f"ACE needs consecutive anchors, got {pred_at_s.anchor_frame} "
                            f"and {pred_at_s_plus_1.anchor_frame}")
    a, b = _points(pred_at_s), _points(pred_at_s_plus_1)
    if len(a) != len(b) or len(a) < 2:
        raise ContractError("ACE needs equal horizons of at least two steps")
    return float(np.linalg.norm(a[-1] - b[-2]))


def relative_error(ref_k, ref_kd, est_k, est_kd):
    """(Q_k^-1 Q_k+d)^-1 (P_k^-1 P_k+d) for reference Q and estimate P."""
    ref_rel = ref_k.inverse().compose(ref_kd)
    est_rel = est_k.inverse().compose(est_kd)
    return ref_rel.inverse().compose(est_rel)


def rpe(reference: dict, estimate: dict, delta: int = 1) -> RpeScore:
    """Relative pose error RMSE over every frame pair (k, k+delta) present in both inputs."""
    if delta < 1:
        raise ContractError("delta must be at least 1")
    common = sorted(set(reference) & set(estimate))
    if len(common) < delta + 1:
        raise DataError(f"RPE with delta={delta} needs at least {delta + 1} common frames, got {len(common)}")
    have = set(common)
    trans, rot = [], []
    for k in common:
        if k + delta not in have:
            continue
        e = relative_error(reference[k], reference[k + delta], estimate[k], estimate[k + delta])
        trans.append(float(np.linalg.norm(e.translation)))
        rot.append(math.degrees(e.rotation_angle()))
    if not trans:
        raise DataError(f"no frame pairs {delta} apart in the common frames")
    t, r = np.array(trans), np.array(rot)
    return RpeScore(float(np.sqrt(np.mean(t ** 2))), float(np.sqrt(np.mean(r ** 2))), delta, len(t))


def score_predictions(instances, predictions) -> list[InstanceScore]:
    """Score predictions against their instances' future truth; ACE where anchor+1 exists."""
    preds = {p.key: p for p in predictions}
    scores = []
    for inst in instances:
        p = preds.get(inst.key)
        if p is None:
            raise ContractError(f"no prediction for instance {inst.key}")
        nxt = preds.get((inst.object_id, inst.anchor_frame + 1))
        scores.append(InstanceScore(
            inst.object_id,
            inst.anchor_frame,
            ade(p, inst.future_truth.xy),
            fde(p, inst.future_truth.xy),
            ace(p, nxt) if nxt is not None else None,
        ))
    return scores


@dataclass(frozen=True)
class AggregateRow:
    sequence: str
    count: int
    ace_count: int
    ade: float
    fde: float
    ace: float


def _mean_row(name, scores) -> AggregateRow:
    aces = [s.ace for s in scores if s.ace is not None]
    return AggregateRow(
        name,
        len(scores),
        len(aces),
        float(np.mean([s.ade for s in scores])) if scores else math.nan,
        float(np.mean([s.fde for s in scores])) if scores else math.nan,
        float(np.mean(aces)) if aces else math.nan,
    )


def aggregate(scores_by_sequence: dict, overall_name: str = "avg") -> list[AggregateRow]:
    """Per-sequence means plus an overall mean weighted by each sequence's count.

    ADE/FDE are weighted by instance counts, ACE by its own (smaller) counts.
    """
    if not scores_by_sequence:
        raise ContractError("aggregate needs at least one sequence")
    rows = [_mean_row(str(seq), list(scores)) for seq, scores in scores_by_sequence.items()]
    n = sum(r.count for r in rows)
    n_ace = sum(r.ace_count for r in rows)

    def weighted(attr, weight):
        total = sum(getattr(r, weight) for r in rows)
        if total == 0:
            return math.nan
        return sum(getattr(r, attr) * getattr(r, weight) for r in rows if getattr(r, weight)) / total

    rows.append(AggregateRow(overall_name, n, n_ace, weighted("ade", "count"), weighted("fde", "count"),
                             weighted("ace", "ace_count")))
    return rows


METRIC_NAMES = ("ADE", "FDE", "ACE")


def results_table(scores: dict) -> tuple[list, list[dict]]:
    """Rows metric x source, columns sequences + avg.

    ``scores`` maps source -> sequence -> list of InstanceScore. Missing
    (source, sequence) cells are left empty.
    """
    sequences = []
    for by_seq in scores.values():
        for seq in by_seq:
            if str(seq) not in sequences:
                sequences.append(str(seq))
    columns = ["metric", "source", *sequences, "avg"]
    aggregated = {src: {r.sequence: r for r in aggregate({str(k): v for k, v in by_seq.items()})}
                  for src, by_seq in scores.items()}
    rows = []
    for metric in METRIC_NAMES:
        for src in scores:
            row = {"metric": metric, "source": src}
            for col in [*sequences, "avg"]:
                r = aggregated[src].get(col)
                row[col] = None if r is None else getattr(r, metric.lower())
            rows.append(row)
    return columns, rows


def _cell(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_instance_scores(path, rows) -> None:
    """``rows`` are (sequence, source, InstanceScore) triples."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sequence", "source", "object_id", "anchor_frame", "ade", "fde", "ace"])
        for seq, src, s in rows:
            w.writerow([seq, src, s.object_id, s.anchor_frame, _cell(s.ade), _cell(s.fde), _cell(s.ace)])


def read_instance_scores(path) -> list[tuple]:
    out = []
    with Path(path).open(newline="") as fh:
        for r in csv.DictReader(fh):
            out.append((r["sequence"], r["source"], InstanceScore(
                int(r["object_id"]), int(r["anchor_frame"]), float(r["ade"]), float(r["fde"]),
                float(r["ace"]) if r["ace"] else None)))
    return out


def write_table(path, columns, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c)) for c in columns])
