"""Command-line entry point: ingest, smooth, diagnose, window, predict, evaluate, synth."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .diagnostics import SERIES, compare_sources, roughness, smoothness, write_series_csv
from .errors import DataError, EstPredError, InputError
from .geom import CAMERA_XZ, CONVENTIONS, WORLD_XY, Pose3
from .ingest import (
    HEADING_DIFFERENCED,
    HEADING_PROVIDED,
    KITTI_VEHICLE_TYPES,
    calibrate_scale,
    estimator_track,
    parse_estimator_tracks,
    parse_kitti_tracking_labels,
    to_world_track,
)
from .metrics import rpe, results_table, score_predictions, write_instance_scores, write_table
from .predictors import (
    FITTED,
    ControlLimits,
    predict_constant_velocity,
    predict_unicycle,
    run_external_predictor,
    write_predictions,
)
from .smoothing import EkfConfig, ekf_smooth
from .synth import RNG_ALGORITHM, ControlSegment, MotionProfile, NoiseSpec, corrupt, generate
from .tracks import FrameClock, read_state_file, write_state_file
from .windowing import WindowSpec, eligible, make_instances, read_instances, write_instances

log = logging.getLogger("estpred")

PREDICTORS = ("cv", "unicycle", "unicycle-fitted")
SOURCE_ALIASES = {"estimated": "estimated", "ours": "estimated", "gt": "gt", "gt_ekf": "gt_ekf",
                  "gt+ekf": "gt_ekf", "synthetic": "synthetic"}


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--rate-hz", type=float, default=20.0)
    g.add_argument("--horizon", type=int, default=30)
    g.add_argument("--min-history", type=int, default=1)
    g.add_argument("--max-history", type=int, default=6)
    g.add_argument("--max-turn-rate", type=float, default=0.7)
    g.add_argument("--max-accel", type=float, default=4.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", type=Path, default=Path("out"))
    g.add_argument("--ekf-config", type=Path, help="key=value EKF parameter file")
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def _source_arg(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError("expected LABEL=PATH")
    label, path = text.split("=", 1)
    return label, Path(path)


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="estpred", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="convert labels or estimator output to 2D states")
    p.add_argument("input", type=Path)
    p.add_argument("--format", choices=("kitti-gt", "estimator", "canonical"), required=True)
    p.add_argument("--motion-file", type=Path)
    p.add_argument("--camera-poses", type=Path, help="pose file whose object 0 rows are camera poses")
    p.add_argument("--convention", choices=CONVENTIONS)
    p.add_argument("--heading-source", choices=(HEADING_PROVIDED, HEADING_DIFFERENCED))
    p.add_argument("--types", default=",".join(KITTI_VEHICLE_TYPES),
                   help="comma-separated KITTI type whitelist, or 'all' (default: %(default)s)")
    p.add_argument("--source-tag", default=None)
    p.add_argument("--calibrate-to", type=Path, help="state file holding the reference speed profile")
    p.add_argument("--calibrate-object", type=int, help="object id of the reference profile")

    p = sub.add_parser("smooth", parents=[common], help="EKF-smooth a state file")
    p.add_argument("input", type=Path)

    p = sub.add_parser("diagnose", parents=[common], help="smoothness series and roughness")
    p.add_argument("--source", action="append", type=_source_arg, required=True, metavar="LABEL=PATH")
    p.add_argument("--object-id", type=int)

    p = sub.add_parser("window", parents=[common], help="export prediction instances")
    p.add_argument("input", type=Path)

    p = sub.add_parser("predict", parents=[common], help="run a predictor over an instance file")
    p.add_argument("instances", type=Path)
    p.add_argument("--predictor", choices=PREDICTORS, default="cv")
    p.add_argument("--external-command", help="external predictor command line")

    p = sub.add_parser("evaluate", parents=[common], help="ADE/FDE/ACE (and RPE) reports")
    p.add_argument("--source", action="append", type=_source_arg, metavar="LABEL=PATH", default=[])
    p.add_argument("--sequences-dir", type=Path, help="leave-one-sequence-out layout DIR/<seq>/<label>.csv")
    p.add_argument("--predictor", choices=PREDICTORS, default="cv")
    p.add_argument("--external-command", help="external predictor command line")
    p.add_argument("--rpe-reference", type=Path)
    p.add_argument("--rpe-estimate", type=Path)
    p.add_argument("--rpe-delta", type=int, default=1)

    p = sub.add_parser("synth", parents=[common], help="generate clean and noisy synthetic tracks")
    p.add_argument("--profile", type=Path)
    p.add_argument("--speed", type=float, default=10.0)
    p.add_argument("--duration", type=float, default=5.0)
    p.add_argument("--accel", type=float, default=0.0)
    p.add_argument("--turn-rate", type=float, default=0.0)
    p.add_argument("--position-std", type=float, default=0.0)
    p.add_argument("--heading-std", type=float, default=0.0)
    p.add_argument("--object-id", type=int, default=1)
    return parser


class Run:
    """Resolved settings shared by every subcommand, written out as the manifest."""

    def __init__(self, args):
        self.args = args
        self.clock = FrameClock(args.rate_hz)
        self.spec = WindowSpec(args.min_history, args.max_history, args.horizon)
        self.limits = ControlLimits(args.max_turn_rate, args.max_accel)
        self.ekf = EkfConfig.from_file(args.ekf_config) if args.ekf_config else EkfConfig()
        self.out = Path(args.out)
        self.extra: dict = {}

    def manifest(self) -> dict:
        a = self.args
        inputs = {}
        for k, v in sorted(vars(a).items()):
            if k in ("out", "verbose", "func", "command"):
                continue
            if isinstance(v, Path):
                v = str(v)
            elif isinstance(v, list):
                v = [[lab, str(p)] if isinstance(p, Path) else v for lab, p in v]
            inputs[k] = v
        return {
            "tool": "estpred",
            "version": __version__,
            "command": a.command,
            "arguments": inputs,
            "clock": {"rate_hz": self.clock.rate_hz, "dt": self.clock.dt},
            "window": {"min_history": self.spec.min_history, "max_history": self.spec.max_history,
                       "horizon": self.spec.horizon},
            "limits": {"max_turn_rate": self.limits.max_turn_rate, "max_accel": self.limits.max_accel},
            "ekf": self.ekf.to_dict(),
            "seed": a.seed,
            "rng": RNG_ALGORITHM,
            "output_dir": str(self.out),
            **self.extra,
        }

    def write_manifest(self):
        self.out.mkdir(parents=True, exist_ok=True)
        with (self.out / "manifest.json").open("w") as fh:
            json.dump(self.manifest(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _tag_for(label: str, default: str = "estimated") -> str:
    return SOURCE_ALIASES.get(label.strip().lower(), default)


def _write_json(path: Path, data) -> None:
    with path.open("w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _summary(tracks) -> dict:
    return {
        "objects": len(tracks),
        "segments": sum(len(t.segments) for t in tracks),
        "frames": sum(len(t) for t in tracks),
    }


def cmd_ingest(run: Run) -> int:
    a = run.args
    if not a.input.is_file():
        raise InputError(f"no such input file: {a.input}")
    if a.format == "kitti-gt":
        types = None if a.types.lower() == "all" else a.types.split(",")
        records = parse_kitti_tracking_labels(a.input, run.clock, types)
        all_frames = sorted({r.frame for recs in records.values() for r in recs})
        if a.camera_poses:
            cams = parse_estimator_tracks(a.camera_poses, run.clock).camera_poses
        else:
            log.info("no camera poses given; using identity camera poses (camera frame as world)")
            cams = {f: Pose3() for f in all_frames}
        tracks = [to_world_track(recs, cams, a.convention or CAMERA_XZ, run.clock,
                                 a.heading_source or HEADING_PROVIDED, a.source_tag or "gt")
                  for _, recs in sorted(records.items())]
    elif a.format == "estimator":
        bundle = parse_estimator_tracks(a.input, run.clock, a.motion_file)
        run.extra["consistency_warnings"] = list(bundle.warnings)
        if a.motion_file:
            checked = sum(len(m) for m in bundle.object_motions.values())
            print(f"motion consistency: {checked} motions checked, {len(bundle.warnings)} warnings")
        tracks = [estimator_track(bundle, oid, a.convention or WORLD_XY, a.heading_source or HEADING_DIFFERENCED)
                  for oid in sorted(bundle.object_poses)]
        if a.source_tag:
            tracks = [t.with_segments(t.segments, a.source_tag) for t in tracks]
    else:
        tracks = read_state_file(a.input, a.source_tag or "estimated")
    if a.calibrate_to:
        ref_tracks = read_state_file(a.calibrate_to)
        ref = next((t for t in ref_tracks if a.calibrate_object is None or t.object_id == a.calibrate_object), None)
        if ref is None:
            raise DataError(f"reference object {a.calibrate_object} not in {a.calibrate_to}")
        speeds = [v for s in ref.segments for v in s.speed]
        scaled, scales = [], {}
        for t in tracks:
            t2, k = calibrate_scale(t, speeds)
            scaled.append(t2)
            scales[str(t.object_id)] = k
        tracks = scaled
        run.extra["scale_factors"] = scales
    run.out.mkdir(parents=True, exist_ok=True)
    write_state_file(run.out / "states.csv", tracks)
    summary = _summary(tracks)
    _write_json(run.out / "ingest_summary.json", summary)
    run.write_manifest()
    print(f"{summary['objects']} objects, {summary['segments']} segments, {summary['frames']} frames")
    return 0


def cmd_smooth(run: Run) -> int:
    tracks = read_state_file(run.args.input, "gt")
    smoothed = [ekf_smooth(t, run.ekf, run.clock) for t in tracks]
    run.out.mkdir(parents=True, exist_ok=True)
    write_state_file(run.out / "states.csv", smoothed)
    run.write_manifest()
    print(f"smoothed {len(smoothed)} objects")
    return 0


def _fmt(v) -> str:
    return "" if v != v else repr(float(v))


def cmd_diagnose(run: Run) -> int:
    sources = [(label, read_state_file(path, _tag_for(label))) for label, path in run.args.source]
    ids = [set(t.object_id for t in tracks) for _, tracks in sources]
    common_ids = set.intersection(*ids)
    if run.args.object_id is not None:
        if run.args.object_id not in common_ids:
            raise DataError(f"object {run.args.object_id} is not present in every source")
        oid = run.args.object_id
    elif common_ids:
        # default to the object with the most frames in the first source
        first = {t.object_id: t for t in sources[0][1]}
        oid = max(sorted(common_ids), key=lambda i: len(first[i]))
    else:
        raise DataError("sources share no object id")
    chosen = [(label, next(t for t in tracks if t.object_id == oid)) for label, tracks in sources]
    run.out.mkdir(parents=True, exist_ok=True)
    if len(chosen) == 1:
        label, track = chosen[0]
        reports = {label: smoothness(track)}
        rough = {label: roughness(track)}
    else:
        cmp = compare_sources([t for _, t in chosen], [lab for lab, _ in chosen])
        reports, rough = cmp.reports, cmp.roughness
        with (run.out / "comparison.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            labels = [lab for lab, _ in chosen]
            w.writerow(["series", *labels, "ordering"])
            for row in cmp.table():
                w.writerow([row["series"], *[_fmt(row[lab]) for lab in labels], row["ordering"]])
    write_series_csv(run.out / "series.csv", reports)
    with (run.out / "roughness.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source", "object_id", *SERIES])
        for label, r in rough.items():
            w.writerow([label, oid, *[_fmt(r[k]) for k in SERIES]])
    run.extra["object_id"] = oid
    run.write_manifest()
    print(f"object {oid}: {len(chosen)} source(s) diagnosed")
    return 0


def cmd_window(run: Run) -> int:
    tracks = read_state_file(run.args.input, "estimated")
    instances = [i for t in tracks for i in make_instances(t, run.spec)]
    run.out.mkdir(parents=True, exist_ok=True)
    write_instances(run.out / "instances.csv", instances)
    n_elig = sum(any(eligible(t, run.spec)) for t in tracks)
    run.write_manifest()
    print(f"{n_elig} eligible objects, {len(instances)} instances")
    return 0


def _predict(run: Run, instances, predictor, external, env=None):
    if external:
        return run_external_predictor(instances, external.split(), run.spec.horizon, env=env)
    if predictor == "cv":
        return [predict_constant_velocity(i, run.clock, run.spec.horizon) for i in instances]
    controls = FITTED if predictor == "unicycle-fitted" else None
    return [predict_unicycle(i, controls, run.limits, run.clock, run.spec.horizon) for i in instances]


def cmd_predict(run: Run) -> int:
    instances = read_instances(run.args.instances)
    preds = _predict(run, instances, run.args.predictor, run.args.external_command)
    run.out.mkdir(parents=True, exist_ok=True)
    write_predictions(run.out / "predictions.csv", preds)
    run.write_manifest()
    print(f"{len(preds)} predictions")
    return 0


def _evaluate_one(run: Run, sequence: str, label: str, path: Path, train_files):
    tracks = read_state_file(path, _tag_for(label))
    instances = [i for t in tracks for i in make_instances(t, run.spec)]
    elig_rows = []
    for t in tracks:
        for seg, ok in zip(t.segments, eligible(t, run.spec)):
            elig_rows.append([sequence, label, t.object_id, int(seg.frames[0]), len(seg), int(ok),
                              run.spec.instance_count(len(seg))])
    if not instances:
        return elig_rows, [], []
    env = {"PREDICTOR_TRAIN_FILES": os.pathsep.join(str(p) for p in train_files)}
    preds = _predict(run, instances, run.args.predictor, run.args.external_command, env)
    return elig_rows, score_predictions(instances, preds), preds


def _collect_sources(run: Run) -> dict:
    """sequence -> list of (label, path)."""
    a = run.args
    if a.sequences_dir:
        root = a.sequences_dir
        if not root.is_dir():
            raise InputError(f"no such sequences directory: {root}")
        seqs = {}
        for d in sorted(p for p in root.iterdir() if p.is_dir()):
            files = sorted(d.glob("*.csv"))
            if files:
                seqs[d.name] = [(f.stem, f) for f in files]
        if not seqs:
            raise InputError(f"{root} holds no <sequence>/<source>.csv files")
        return seqs
    if not a.source:
        raise InputError("evaluate needs --source LABEL=PATH or --sequences-dir")
    return {"all": list(a.source)}


def cmd_evaluate(run: Run) -> int:
    a = run.args
    seqs = _collect_sources(run)
    jobs = []
    for seq, items in seqs.items():
        for label, path in items:
            train = [p for other, its in seqs.items() if other != seq for lab, p in its if lab == label]
            jobs.append((seq, label, path, train))
    with ThreadPoolExecutor(max_workers=min(8, len(jobs))) as pool:
        results = list(pool.map(lambda j: _evaluate_one(run, *j), jobs))

    elig_rows, score_rows = [], []
    by_source: dict = {}
    for (seq, label, _, _), (elig, scores, _) in zip(jobs, results):
        elig_rows.extend(elig)
        score_rows.extend((seq, label, s) for s in scores)
        if scores:
            by_source.setdefault(label, {})[seq] = scores
    run.out.mkdir(parents=True, exist_ok=True)
    with (run.out / "eligibility.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sequence", "source", "object_id", "segment_start", "length", "eligible", "instances"])
        w.writerows(elig_rows)
    if not score_rows:
        raise DataError(f"no eligible objects: a segment needs at least {run.spec.min_length} consecutive frames "
                        f"({run.spec.min_history} history + current + {run.spec.horizon} horizon)")
    write_instance_scores(run.out / "instance_scores.csv", score_rows)
    columns, rows = results_table(by_source)
    write_table(run.out / "summary.csv", columns, rows)
    if a.sequences_dir:
        for seq in seqs:
            sub = {lab: {seq: by_seq[seq]} for lab, by_seq in by_source.items() if seq in by_seq}
            if not sub:
                continue
            (run.out / seq).mkdir(exist_ok=True)
            write_instance_scores(run.out / seq / "instance_scores.csv",
                                  [r for r in score_rows if r[0] == seq])
            c, r = results_table(sub)
            write_table(run.out / seq / "summary.csv", c, r)
    if a.rpe_reference or a.rpe_estimate:
        if not (a.rpe_reference and a.rpe_estimate):
            raise InputError("RPE needs both --rpe-reference and --rpe-estimate")
        ref = parse_estimator_tracks(a.rpe_reference, run.clock)
        est = parse_estimator_tracks(a.rpe_estimate, run.clock)
        ref_all = {0: ref.camera_poses, **ref.object_poses}
        est_all = {0: est.camera_poses, **est.object_poses}
        with (run.out / "rpe.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["object_id", "delta", "pairs", "rpe_t_rmse_m", "rpe_r_rmse_deg"])
            for oid in sorted(set(ref_all) & set(est_all)):
                if not ref_all[oid] or not est_all[oid]:
                    continue
                s = rpe(ref_all[oid], est_all[oid], a.rpe_delta)
                w.writerow([oid, s.delta, s.pairs, repr(s.rpe_t_rmse), repr(s.rpe_r_rmse)])
    run.write_manifest()
    n = len(score_rows)
    n_ace = sum(1 for r in score_rows if r[2].ace is not None)
    print(f"{n} instances scored ({n_ace} ACE pairs) across {len(seqs)} sequence(s)")
    return 0


def cmd_synth(run: Run) -> int:
    a = run.args
    if a.profile:
        profile = MotionProfile.from_file(a.profile)
    else:
        profile = MotionProfile(speed=a.speed, schedule=(ControlSegment(a.duration, a.accel, a.turn_rate),),
                                clock=run.clock)
    clean = generate(profile, a.object_id)
    run.out.mkdir(parents=True, exist_ok=True)
    write_state_file(run.out / "clean.csv", [clean])
    noise = NoiseSpec(a.position_std, a.heading_std, a.seed)
    if noise.position_std > 0 or noise.heading_std > 0:
        write_state_file(run.out / "noisy.csv", [corrupt(clean, noise, profile.clock)])
    run.extra["profile"] = profile.to_dict()
    run.write_manifest()
    print(f"{len(clean)} frames generated")
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "smooth": cmd_smooth,
    "diagnose": cmd_diagnose,
    "window": cmd_window,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](Run(args))
    except EstPredError as exc:
        print(f"estpred {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"estpred {args.command}: error: {exc}", file=sys.stderr)
        return InputError.exit_code


if __name__ == "__main__":
    sys.exit(main())
