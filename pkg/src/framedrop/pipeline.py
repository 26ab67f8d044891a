"""Replay detection streams through scheduler and tracker, then evaluate.

Per frame: the tracker's confirmed tracks are predicted to the current cycle,
the scheduler decides from those predictions and the camera detections, and
the tracker steps with that decision. Sequences are independent and may be
run in a worker pool; results are always folded in sequence order.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .energy import EnergyProfile, YieldInput, compute_yield, simulate_draw
from .errors import UndefinedMetricError
from .io_kitti import SequenceData, TrackOutput, tracks_from_outputs
from .metrics import ClearCounts, HotaCounts, MatchingConfig, MetricsReport, evaluate_counts
from .scheduler import ScheduleDecision, ScheduleStats, Scheduler, SchedulerConfig
from .tracker import CONFIRMED, Tracker, TrackerConfig


@dataclass
class SequenceResult:
    sequence_id: str
    outputs: dict            # frame -> list[TrackOutput]
    decisions: list          # ScheduleDecision per frame
    stats: ScheduleStats
    clear: Optional[ClearCounts] = None
    hota: Optional[HotaCounts] = None

    def first_output_frame(self, track_filter=None) -> Optional[int]:
        """First frame with any confirmed track output (optionally filtered)."""
        for k in sorted(self.outputs):
            tracks = self.outputs[k]
            if track_filter is not None:
                tracks = [t for t in tracks if track_filter(t)]
            if tracks:
                return k
        return None

    def first_processed_frame(self, start: int = 0) -> Optional[int]:
        return next((k for k, d in enumerate(self.decisions) if k >= start and d.process), None)


def run_sequence(seq: SequenceData, tracker_config: TrackerConfig, scheduler_config: SchedulerConfig,
                 matching: Optional[MatchingConfig] = None) -> SequenceResult:
    tracker = Tracker(tracker_config, seq.calib)
    scheduler = Scheduler(scheduler_config, seq.calib)
    latency = scheduler_config.camera_latency_frames
    outputs: dict[int, list[TrackOutput]] = {}
    decisions: list[ScheduleDecision] = []
    for frame in seq.frames:
        k = frame.frame_index
        if latency:
            stale = seq.frames[k - latency].camera_detections if k >= latency else []
            frame = dataclasses.replace(frame, camera_detections=list(stale))
        predicted = [t for t in tracker.predicted(1) if t.status == CONFIRMED]
        decision = scheduler.decide(k, predicted, frame.camera_detections)
        decisions.append(decision)
        outputs[k] = tracker.step(frame, decision)
    result = SequenceResult(seq.sequence_id, outputs, decisions, scheduler.stats)
    if matching is not None and seq.ground_truth:
        result.clear, result.hota = evaluate_counts(seq.ground_truth, tracks_from_outputs(outputs), matching,
                                                    len(seq.frames))
    return result


@dataclass
class ExperimentResult:
    sequences: list
    stats: ScheduleStats
    clear: ClearCounts
    hota: HotaCounts

    def report(self, profile: Optional[EnergyProfile] = None, reference: Optional["ExperimentResult"] = None,
               camera_always_on: bool = True) -> MetricsReport:
        extra = {"eff_target": self.stats.effective_target}
        if profile is not None:
            draw = simulate_draw(self.stats.effective_target, profile, camera_always_on)
            extra["sys_draw_w"] = draw
            if reference is not None and reference is not self:
                ref_draw = simulate_draw(reference.stats.effective_target, profile, camera_always_on)
                try:
                    extra["yield_w_per_hota"] = compute_yield(
                        YieldInput(ref_draw, reference.hota.hota, draw, self.hota.hota))
                except UndefinedMetricError:
                    pass
        return MetricsReport.from_counts(self.clear, self.hota, **extra)


def _run_one(args):
    return run_sequence(*args)


def run_experiment(sequences: Sequence[SequenceData], tracker_config: TrackerConfig,
                   scheduler_config: SchedulerConfig, matching: MatchingConfig, workers: int = 1) -> ExperimentResult:
    jobs = [(s, tracker_config, scheduler_config, matching) for s in sequences]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    stats = ScheduleStats()
    clear = ClearCounts()
    hota = HotaCounts.zeros(matching.hota_alphas)
    for r in results:
        stats = stats + r.stats
        if r.clear is not None:
            clear = clear + r.clear
            hota = hota + r.hota
    return ExperimentResult(results, stats, clear, hota)


@dataclass
class SweepRow:
    n: int
    m: int
    trigger: bool
    report: MetricsReport

    @property
    def label(self) -> str:
        return f"{self.n}/{self.m}" + (" +trigger" if self.trigger else "")

    def as_dict(self) -> dict:
        return {"n": self.n, "m": self.m, "baseline_target": self.n / self.m, "trigger": self.trigger,
                **self.report.row()}


def sweep(sequences: Sequence[SequenceData], targets: Sequence[tuple[int, int]], trigger: str,
          tracker_config: TrackerConfig, scheduler_config: SchedulerConfig, matching: MatchingConfig,
          profile: Optional[EnergyProfile] = None, workers: int = 1) -> list[SweepRow]:
    """One row per (target, trigger mode); yields are relative to the 1/1 run.

    A 1/1 target processes every frame, so it gets a single row regardless of
    the trigger mode. The 1/1 reference is run even when not requested.
    """
    if not targets:
        raise ValueError("need at least one processing target")
    modes = {"on": (True,), "off": (False,), "both": (False, True)}[trigger]

    def run(n, m, on):
        cfg = dataclasses.replace(scheduler_config, n=n, m=m, event_trigger_enabled=on)
        return run_experiment(sequences, tracker_config, cfg, matching, workers)

    reference = run(1, 1, False)
    rows = []
    for n, m in targets:
        if n == m:
            rows.append(SweepRow(n, m, False, reference.report(profile, None)))
            continue
        for on in modes:
            rows.append(SweepRow(n, m, on, run(n, m, on).report(profile, reference)))
    return rows
