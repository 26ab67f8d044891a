"""Command-line interface.

    framedrop run        track (and evaluate) sequences under one processing schedule
    framedrop sweep      run a set of n/m targets with and without the event trigger
    framedrop calibrate  fit an affine energy profile to (effective target, watts) points
    framedrop gen        write a synthetic scenario as a KITTI-style dataset directory

Settings come from built-in defaults, then an optional JSON ``--config`` file,
then flags. The effective configuration is printed to stderr before work
starts. Tabular results go to stdout (or ``--out``); warnings and errors go to
stderr and are the only things that make the exit status nonzero.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import Settings, load_file, parse_targets
from .energy import FIT_METHODS, PROFILE_DIR_ENV, EnergyProfile, fit_profile, load_profile, profile_dir, \
    profile_name, save_profile, simulate_draw
from .errors import FramedropError
from .geometry import ASSOCIATION_METRICS
from .io_kitti import list_sequences, load_sequence, write_tracking_output
from .metrics import REPORT_FIELDS, MetricsReport, format_value
from .pipeline import run_experiment, sweep
from .reference_data import BASELINE, baseline_draw_points
from .scenario import ScenarioSpec, generate, late_detection_scenario, urban_scenario
from .tracker import VARIANTS

log = logging.getLogger("framedrop")

EXIT_OK, EXIT_WARNINGS, EXIT_ERROR = 0, 1, 2
SCENARIOS = ("urban", "late")


class _Formatter(logging.Formatter):
    def format(self, record):
        return f"framedrop: {record.levelname.lower()}: {record.getMessage()}"


class _DiagnosticCounter(logging.Handler):
    def __init__(self):
        super().__init__(logging.WARNING)
        self.count = 0

    def emit(self, record):
        self.count += 1


# ---------------------------------------------------------------- argument parsing

def _add(group, *names, dest, **kw):
    # dest is the dotted config key; argparse keeps the dot in the namespace
    if "action" not in kw and "choices" not in kw:
        kw.setdefault("metavar", dest.rpartition(".")[2].upper())
    group.add_argument(*names, dest=dest, default=None, **kw)


def _data_options(p):
    g = p.add_argument_group("input")
    _add(g, "--data", dest="data.root", metavar="DIR", help="KITTI-style dataset directory")
    _add(g, "--seq", dest="data.sequences", metavar="ID", action="append", help="sequence id (repeatable)")
    _add(g, "--scenario", dest="data.scenario", metavar="NAME|FILE",
         help=f"synthesize input instead: one of {', '.join(SCENARIOS)} or a scenario JSON file")
    _add(g, "--seed", dest="data.seed", type=int, help="scenario seed")
    _add(g, "--duration", dest="data.duration", type=int, help="scenario length in frames")


def _tracker_options(p):
    g = p.add_argument_group("tracker")
    _add(g, "--variant", dest="tracker.variant", choices=VARIANTS)
    _add(g, "--metric", dest="tracker.metric", choices=ASSOCIATION_METRICS, help="lidar association measure")
    _add(g, "--gate", dest="tracker.gate", type=float,
         help="minimum BEV IoU, or maximum centroid distance in meters")
    _add(g, "--confirm-hits", dest="tracker.confirm_hits", type=int)
    _add(g, "--max-misses", dest="tracker.max_misses", type=int)
    _add(g, "--max-coast", dest="tracker.max_coast_frames", type=int)


def _scheduler_options(p, single_target: bool):
    g = p.add_argument_group("scheduler")
    if single_target:
        _add(g, "-n", dest="scheduler.n", type=int, help="frames processed per period")
        _add(g, "-m", dest="scheduler.m", type=int, help="period length in frames")
        _add(g, "--trigger", dest="scheduler.event_trigger_enabled", action=argparse.BooleanOptionalAction,
             help="enable the camera event trigger")
    _add(g, "--d-max", dest="scheduler.d_max", type=float, help="trigger distance limit in meters")
    _add(g, "--iou-min", dest="scheduler.iou_min", type=float, help="trigger fires below this IoU")
    _add(g, "--camera-latency", dest="scheduler.camera_latency_frames", type=int)


def _energy_options(p):
    g = p.add_argument_group("energy")
    _add(g, "--profile", dest="energy.profile", metavar="NAME|FILE",
         help=f"energy profile ('none' disables); names resolve in ${PROFILE_DIR_ENV}")
    _add(g, "--camera-always-on", dest="energy.camera_always_on", action=argparse.BooleanOptionalAction)


def _output_options(p, plots: bool):
    g = p.add_argument_group("output")
    _add(g, "-o", "--out", dest="output.dir", metavar="DIR", help="also write results into this directory")
    _add(g, "--format", dest="output.format", choices=("csv", "tsv", "json"), help="stdout format")
    _add(g, "-j", "--workers", dest="output.workers", type=int, help="worker processes")
    if plots:
        _add(g, "--plots", dest="output.plots", action=argparse.BooleanOptionalAction,
             help="render figures into --out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="framedrop", description="Energy-aware frame dropping for tracking.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-c", "--config", metavar="FILE", help="JSON config file")
    parser.add_argument("-q", "--quiet", action="store_true", help="do not print the configuration banner")
    parser.add_argument("-v", "--verbose", action="store_true", help="report progress on stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("run", help="track sequences under one n/m schedule")
    _data_options(p)
    _tracker_options(p)
    _scheduler_options(p, single_target=True)
    _energy_options(p)
    _output_options(p, plots=False)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="sweep processing targets with and without the trigger")
    _data_options(p)
    _tracker_options(p)
    _scheduler_options(p, single_target=False)
    _energy_options(p)
    g = p.add_argument_group("sweep")
    _add(g, "--targets", dest="sweep.targets", metavar="n/m,...", help="comma separated targets")
    _add(g, "--trigger-mode", dest="sweep.trigger", choices=("on", "off", "both"))
    _output_options(p, plots=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", help="fit an energy profile")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--points", metavar="FILE", help="CSV of eff_target,watts rows")
    src.add_argument("--reference", metavar="TRACKER/MODEL",
                     help="fit the reference baseline draws of a perception system")
    p.add_argument("--model", help="detector model of the fitted profile (required with --points)")
    p.add_argument("--tracker", help="tracker name stored with the profile")
    p.add_argument("--method", choices=FIT_METHODS, default="minimax")
    p.add_argument("--max-residual", type=float, default=40.0, metavar="W",
                   help="warn when any point misses the fit by more than this")
    p.add_argument("--save", metavar="FILE", help=f"profile path (default: ${PROFILE_DIR_ENV}/<name>.json or ./)")
    _add(p, "--format", dest="output.format", choices=("csv", "tsv", "json"), help="stdout format")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("gen", help="write a synthetic scenario to disk")
    _add(p, "--scenario", dest="data.scenario", metavar="NAME|FILE", help=f"{' or '.join(SCENARIOS)} or a JSON spec")
    _add(p, "--seed", dest="data.seed", type=int)
    _add(p, "--duration", dest="data.duration", type=int)
    p.add_argument("--sequence-id", help="override the sequence id")
    p.add_argument("--spec-out", metavar="FILE", help="also save the scenario spec as JSON")
    _add(p, "-o", "--out", dest="output.dir", metavar="DIR", help="dataset directory (required)")
    _add(p, "--format", dest="output.format", choices=("csv", "tsv", "json"), help="stdout format")
    p.set_defaults(func=cmd_gen)
    return parser


def _flags(args) -> dict:
    return {k: v for k, v in vars(args).items() if "." in k}


# ---------------------------------------------------------------- helpers

def _emit(rows: Sequence[dict], fmt: str, stream) -> None:
    if fmt == "json":
        json.dump(list(rows), stream, indent=2, default=lambda o: None)
        stream.write("\n")
        return
    if not rows:
        return
    writer = csv.DictWriter(stream, fieldnames=list(rows[0]), delimiter="\t" if fmt == "tsv" else ",",
                            lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: format_value(v) for k, v in row.items()})


def _write_table(rows, out_dir: Path, stem: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / f"{stem}.csv", "w") as fh:
        _emit(rows, "csv", fh)
    with open(out_dir / f"{stem}.json", "w") as fh:
        _emit(rows, "json", fh)
    log.info("wrote %s/%s.{csv,json}", out_dir, stem)


def _scenario_spec(settings: Settings, name: Optional[str] = None) -> ScenarioSpec:
    name = name or settings.get("data.scenario")
    seed, duration = settings.get("data.seed"), settings.get("data.duration")
    if name == "urban":
        return urban_scenario(**({"duration": duration} if duration else {}), seed=seed)
    if name == "late":
        return late_detection_scenario(**({"duration": duration} if duration else {}), seed=seed)
    path = Path(name)
    if not path.exists():
        raise FramedropError(f"scenario {name!r} is neither {' nor '.join(SCENARIOS)} nor an existing file")
    return ScenarioSpec.from_json(path.read_text())


def _load_sequences(settings: Settings) -> list:
    root, scenario = settings.get("data.root"), settings.get("data.scenario")
    if root and scenario:
        raise FramedropError("give either a dataset directory or a scenario, not both")
    if root:
        ids = settings.get("data.sequences") or list_sequences(root)
        if not ids:
            raise FramedropError(f"no sequences found under {root}")
        return [load_sequence(root, s) for s in ids]
    if scenario:
        return [generate(_scenario_spec(settings)).as_sequence()]
    raise FramedropError("no input: pass --data DIR or --scenario NAME")


def _profile(settings: Settings) -> Optional[EnergyProfile]:
    ref = settings.get("energy.profile")
    if ref in (None, "", "none"):
        return None
    return load_profile(ref)


def _report_warnings(label: str, report: MetricsReport) -> None:
    for flag in report.flags:
        log.warning("%s: %s", label, flag)


# ---------------------------------------------------------------- commands

def cmd_run(args, settings: Settings) -> None:
    seqs = _load_sequences(settings)
    tracker, scheduler, matching = settings.tracker(), settings.scheduler(), settings.matching()
    profile = _profile(settings)
    camera_on = settings.get("energy.camera_always_on")
    workers = settings.get("output.workers")
    result = run_experiment(seqs, tracker, scheduler, matching, workers)
    reference = None
    has_gt = any(s.ground_truth for s in seqs)
    if profile is not None and has_gt and scheduler.n != scheduler.m:
        reference = run_experiment(seqs, tracker, dataclasses.replace(scheduler, n=1, m=1), matching, workers)

    rows = []
    for seq, r in zip(seqs, result.sequences):
        row = {"sequence": seq.sequence_id, "frames": r.stats.frames_total, "processed": r.stats.frames_processed,
               "triggered": r.stats.frames_event_triggered}
        extra = {"eff_target": r.stats.effective_target}
        if profile is not None:
            extra["sys_draw_w"] = simulate_draw(r.stats.effective_target, profile, camera_on)
        if r.clear is not None:
            report = MetricsReport.from_counts(r.clear, r.hota, **extra)
            _report_warnings(seq.sequence_id, report)
            row.update(report.row())
        else:
            log.info("%s: no ground truth, metrics omitted", seq.sequence_id)
            row.update({k: extra.get(k) for k in REPORT_FIELDS})
        rows.append(row)
    if len(seqs) > 1:
        s = result.stats
        row = {"sequence": "all", "frames": s.frames_total, "processed": s.frames_processed,
               "triggered": s.frames_event_triggered}
        if has_gt:
            report = result.report(profile, reference, camera_on)
            _report_warnings("all", report)
            row.update(report.row())
        else:
            row.update({k: None for k in REPORT_FIELDS}, eff_target=s.effective_target)
        rows.append(row)
    elif reference is not None:
        rows[0]["yield_w_per_hota"] = result.report(profile, reference, camera_on).yield_w_per_hota

    _emit(rows, settings.get("output.format"), sys.stdout)
    out = settings.get("output.dir")
    if out:
        out = Path(out)
        _write_table(rows, out, "report")
        (out / "tracks").mkdir(parents=True, exist_ok=True)
        for seq, r in zip(seqs, result.sequences):
            with open(out / "tracks" / f"{seq.sequence_id}.txt", "w") as fh:
                write_tracking_output(r.outputs, fh)
        log.info("wrote tracks to %s/tracks", out)


def cmd_sweep(args, settings: Settings) -> None:
    seqs = _load_sequences(settings)
    if not any(s.ground_truth for s in seqs):
        raise FramedropError("a sweep needs ground truth to evaluate")
    targets = parse_targets(settings.get("sweep.targets"))
    profile = _profile(settings)
    rows = sweep(seqs, targets, settings.get("sweep.trigger"), settings.tracker(), settings.scheduler(),
                 settings.matching(), profile, settings.get("output.workers"))
    for r in rows:
        _report_warnings(r.label, r.report)
        if profile is not None and r.n != r.m and r.report.yield_w_per_hota is None:
            log.warning("%s: yield undefined (HOTA equals the full-rate run)", r.label)
    table = [r.as_dict() for r in rows]
    _emit(table, settings.get("output.format"), sys.stdout)
    out = settings.get("output.dir")
    if out:
        out = Path(out)
        _write_table(table, out, "sweep")
        if settings.get("output.plots"):
            from .plotting import plot_tradeoff, plot_yield
            title = f"{settings.get('tracker.variant')}, {len(seqs)} sequence(s)"
            plot_tradeoff(rows, out / "tradeoff.png", title)
            if profile is not None:
                plot_yield(rows, out / "yield.png", title)
            log.info("wrote figures to %s", out)


def _read_points(path) -> list[tuple[float, float]]:
    points = []
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or rec[0].lstrip().startswith("#"):
                continue
            try:
                points.append((float(rec[0]), float(rec[1])))
            except (ValueError, IndexError):
                if lineno == 1:
                    continue        # header
                raise FramedropError(f"{path}:{lineno}: expected 'eff_target,watts'") from None
    return points


def cmd_calibrate(args, settings: Settings) -> None:
    if args.reference:
        try:
            tracker, model = args.reference.lower().split("/")
            points = baseline_draw_points(tracker, model)
        except (ValueError, KeyError):
            known = ", ".join(f"{t}/{m}" for t, m in BASELINE)
            raise FramedropError(f"unknown reference {args.reference!r}; known: {known}") from None
        if args.model and args.model != model:
            raise FramedropError(f"--model {args.model} contradicts reference model {model}")
        tracker = args.tracker or tracker
    else:
        if not args.model:
            raise FramedropError("--model is required with --points")
        points, model, tracker = _read_points(args.points), args.model, args.tracker
    fit = fit_profile(points, model, args.method, tracker)
    rows = [{"eff_target": p, "observed_w": w, "predicted_w": q, "residual_w": r}
            for p, w, q, r in zip(fit.targets, fit.observed, fit.predicted, fit.residuals)]
    _emit(rows, settings.get("output.format"), sys.stdout)
    if fit.max_abs_residual > args.max_residual:
        log.warning("max residual %.2f W exceeds %.2f W", fit.max_abs_residual, args.max_residual)
    if np.any(np.diff(fit.predicted[np.argsort(fit.targets)]) <= 0):
        log.warning("modeled draw is not increasing in the effective target")
    name = profile_name(model, tracker)
    if args.save:
        path = Path(args.save)
    elif PROFILE_DIR_ENV in os.environ:
        path = profile_dir() / f"{name}.json"
    else:
        path = Path(f"{name}.json")
    path.parent.mkdir(parents=True, exist_ok=True)
    save_profile(fit.profile, path)
    log.info("saved profile %s (idle %.2f W, slope %.2f W) to %s", name, fit.profile.idle_power,
             fit.profile.lidar_term, path)


def cmd_gen(args, settings: Settings) -> None:
    out = settings.get("output.dir")
    if not out:
        raise FramedropError("gen needs an output directory (--out)")
    if not settings.get("data.scenario"):
        raise FramedropError("gen needs --scenario")
    spec = _scenario_spec(settings)
    if args.sequence_id:
        spec.sequence_id = args.sequence_id
    scenario = generate(spec)
    scenario.write(out)
    if args.spec_out:
        Path(args.spec_out).write_text(spec.to_json() + "\n")
    rows = [{
        "sequence": spec.sequence_id, "frames": len(scenario.frames), "agents": len(spec.agents),
        "gt_rows": len(scenario.ground_truth),
        "lidar_detections": sum(len(f.lidar_detections) for f in scenario.frames),
        "camera_detections": sum(len(f.camera_detections) for f in scenario.frames),
    }]
    _emit(rows, settings.get("output.format"), sys.stdout)
    log.info("wrote sequence %s to %s", spec.sequence_id, out)


_BANNER_SECTIONS = {
    "run": ("data", "tracker", "scheduler", "matching", "energy", "output"),
    "sweep": ("data", "tracker", "scheduler", "matching", "energy", "sweep", "output"),
    "calibrate": ("output",),
    "gen": ("data", "output"),
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_Formatter())
    counter = _DiagnosticCounter()
    log.addHandler(handler)
    log.addHandler(counter)
    log.setLevel(logging.INFO if args.verbose else logging.WARNING)
    log.propagate = False
    try:
        settings = Settings.build(load_file(args.config) if args.config else None, _flags(args))
        if not args.quiet:
            lines = settings.banner(_BANNER_SECTIONS[args.command])
            if args.command in ("run", "sweep"):
                lines.append(f"#   {PROFILE_DIR_ENV} = {json.dumps(str(profile_dir()))}")
            print("\n".join(lines), file=sys.stderr)
        args.func(args, settings)
    except (FramedropError, OSError) as exc:
        field = getattr(exc, "field", None)
        log.error("%s%s", exc, f" [{field}]" if field and field not in str(exc) else "")
        return EXIT_ERROR
    finally:
        log.removeHandler(handler)
        log.removeHandler(counter)
    return EXIT_WARNINGS if counter.count else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
