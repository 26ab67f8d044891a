"""CLEAR (MOTA/MOTP/IDSW) and HOTA (DetA/AssA) tracking metrics.

Both follow the standard definitions used by the KITTI tracking evaluation
tooling. Ground truth and predictions are first reduced to per-frame
similarity matrices by :func:`prepare`, which applies the KITTI conventions:
distractor classes and occluded/truncated/small ground truth are ignored
(predictions matched to them are removed) and unmatched predictions lying
inside DontCare regions are discarded.

Raw counts are kept separately from the final ratios so that sequences can be
combined by summation before ratios are taken.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ConfigError, UndefinedMetricError
from .geometry import bev_iou, iou_matrix
from .io_kitti import GroundTruthTrack, LabelRow

_EPS = np.finfo(float).eps

DISTRACTORS = {"car": ("van",), "pedestrian": ("person",)}

REPORT_FIELDS = ("hota", "det_a", "ass_a", "mota", "motp", "fp", "fn", "idsw", "eff_target", "sys_draw_w",
                 "yield_w_per_hota")


def default_alphas() -> tuple:
    return tuple(round(0.05 * k, 2) for k in range(1, 20))


@dataclass
class MatchingConfig:
    similarity: str = "2d-iou"
    clear_threshold: float = 0.5
    hota_alphas: tuple = field(default_factory=default_alphas)
    classes: tuple = ("car",)
    max_occlusion: Optional[int] = 2
    max_truncation: Optional[float] = 0.0
    min_height: float = 25.0
    dontcare_overlap: float = 0.5

    def __post_init__(self):
        if self.similarity not in ("2d-iou", "bev-iou"):
            raise ConfigError(f"unknown similarity {self.similarity!r}", "similarity")
        if not 0.0 < self.clear_threshold < 1.0:
            raise ConfigError("clear_threshold must lie in (0, 1)", "clear_threshold")
        a = tuple(self.hota_alphas)
        if not a or any(not 0.0 < x < 1.0 for x in a) or any(x >= y for x, y in zip(a, a[1:])):
            raise ConfigError("hota_alphas must be strictly increasing values in (0, 1)", "hota_alphas")
        self.hota_alphas = a
        self.classes = tuple(self.classes)


@dataclass
class FrameData:
    """Evaluated objects of one frame: dense ids and the gt x pred similarity matrix."""

    gt_ids: np.ndarray
    pred_ids: np.ndarray
    similarity: np.ndarray


@dataclass
class EvalData:
    frames: list[FrameData]
    num_gt_ids: int
    num_pred_ids: int


# ---------------------------------------------------------------- preparation

def _by_frame(tracks: Sequence[GroundTruthTrack]) -> dict[int, list[LabelRow]]:
    out: dict[int, list[LabelRow]] = {}
    for t in tracks:
        for e in t.entries:
            out.setdefault(e.frame, []).append(e)
    return out


def _similarity(gt: Sequence[LabelRow], pred: Sequence[LabelRow], kind: str) -> np.ndarray:
    if kind == "2d-iou":
        return iou_matrix([g.box2d for g in gt], [p.box2d for p in pred])
    return np.array([[bev_iou(g.box3d, p.box3d) for p in pred] for g in gt]).reshape(len(gt), len(pred))


def _usable(row: LabelRow, kind: str) -> bool:
    return (row.box2d if kind == "2d-iou" else row.box3d) is not None


def _area_overlap(pred: Sequence[LabelRow], regions: Sequence[LabelRow]) -> np.ndarray:
    """Fraction of each prediction's 2D area covered by each region."""
    iou = iou_matrix([p.box2d for p in pred], [r.box2d for r in regions])
    area_p = np.array([p.box2d.area for p in pred])[:, None]
    area_r = np.array([r.box2d.area for r in regions])[None, :]
    inter = iou * (area_p + area_r) / (1.0 + iou)
    return inter / area_p


def prepare(gt_tracks: Sequence[GroundTruthTrack], pred_tracks: Sequence[GroundTruthTrack],
            config: MatchingConfig, cls: str, num_frames: Optional[int] = None) -> EvalData:
    """Reduce one sequence to per-frame similarity data for class ``cls``."""
    kind = config.similarity
    gt_frames, pred_frames = _by_frame(gt_tracks), _by_frame(pred_tracks)
    last = max([-1, *gt_frames, *pred_frames])
    n_frames = max(num_frames or 0, last + 1)
    distractors = DISTRACTORS.get(cls, ())
    gt_map: dict[int, int] = {}
    pred_map: dict[int, int] = {}
    frames = []
    for k in range(n_frames):
        rows = gt_frames.get(k, [])
        gt_all = [g for g in rows if not g.is_dontcare and _usable(g, kind)
                  and (g.class_id == cls or g.type_name.lower() in distractors)]
        dontcare = [g for g in rows if g.is_dontcare and g.box2d is not None]
        pred = [p for p in pred_frames.get(k, []) if p.class_id == cls and _usable(p, kind)]
        if kind == "2d-iou" and config.min_height > 0:
            pred = [p for p in pred if p.box2d.height >= config.min_height]

        ignore = np.array([g.class_id != cls or _is_ignored(g, config) for g in gt_all], dtype=bool)
        sim_all = _similarity(gt_all, pred, kind)
        drop = np.zeros(len(pred), dtype=bool)
        if len(gt_all) and len(pred):
            score = np.where(sim_all >= 0.5 - _EPS, sim_all, 0.0)
            rows_i, cols_j = linear_sum_assignment(score, maximize=True)
            ok = score[rows_i, cols_j] > _EPS
            rows_i, cols_j = rows_i[ok], cols_j[ok]
            drop[cols_j[ignore[rows_i]]] = True
            unmatched = np.ones(len(pred), dtype=bool)
            unmatched[cols_j] = False
        else:
            unmatched = np.ones(len(pred), dtype=bool)
        if dontcare and len(pred) and kind == "2d-iou":
            covered = (_area_overlap(pred, dontcare) > config.dontcare_overlap).any(axis=1)
            drop |= unmatched & covered

        keep_g = ~ignore
        keep_p = ~drop
        gt_keep = [g for g, kg in zip(gt_all, keep_g) if kg]
        pred_keep = [p for p, kp in zip(pred, keep_p) if kp]
        sim = sim_all[np.ix_(keep_g, keep_p)] if sim_all.size else np.zeros((len(gt_keep), len(pred_keep)))
        gt_ids = np.array([gt_map.setdefault(g.track_id, len(gt_map)) for g in gt_keep], dtype=int)
        pred_ids = np.array([pred_map.setdefault(p.track_id, len(pred_map)) for p in pred_keep], dtype=int)
        frames.append(FrameData(gt_ids, pred_ids, sim.reshape(len(gt_ids), len(pred_ids))))
    return EvalData(frames, len(gt_map), len(pred_map))


def _is_ignored(g: LabelRow, config: MatchingConfig) -> bool:
    if config.max_occlusion is not None and g.occluded > config.max_occlusion:
        return True
    if config.max_truncation is not None and g.truncated > config.max_truncation + 1e-5:
        return True
    if config.similarity == "2d-iou" and g.box2d.height < config.min_height:
        return True
    return False


# ---------------------------------------------------------------- CLEAR

@dataclass
class ClearCounts:
    tp: int = 0
    fn: int = 0
    fp: int = 0
    idsw: int = 0
    motp_sum: float = 0.0

    @property
    def gt_count(self) -> int:
        return self.tp + self.fn

    @property
    def mota(self) -> float:
        """Percent; raises UndefinedMetricError when there is no ground truth."""
        if self.gt_count == 0:
            raise UndefinedMetricError("MOTA is undefined without ground-truth objects")
        return 100.0 * (1.0 - (self.fn + self.fp + self.idsw) / self.gt_count)

    @property
    def motp(self) -> float:
        return 100.0 * self.motp_sum / max(1, self.tp)

    def __add__(self, other: "ClearCounts") -> "ClearCounts":
        return ClearCounts(self.tp + other.tp, self.fn + other.fn, self.fp + other.fp,
                           self.idsw + other.idsw, self.motp_sum + other.motp_sum)


def match_frame(similarity: np.ndarray, threshold: float, gt_ids=None, pred_ids=None,
                prev_pred_for_gt=None) -> list[tuple[int, int]]:
    """Maximum-similarity matching with pairs below ``threshold`` removed.

    When ``prev_pred_for_gt`` (gt id -> pred id matched in the previous frame)
    is given, continuing pairs are preferred first, as CLEAR prescribes.
    Returns ``(gt_index, pred_index)`` pairs.
    """
    if similarity.size == 0:
        return []
    score = similarity.copy()
    if prev_pred_for_gt is not None:
        prev = np.array([prev_pred_for_gt.get(int(g), -1) for g in gt_ids])
        score = score + 1000.0 * (pred_ids[None, :] == prev[:, None])
    score[similarity < threshold - _EPS] = 0.0
    rows, cols = linear_sum_assignment(score, maximize=True)
    ok = score[rows, cols] > _EPS
    return [(int(r), int(c)) for r, c in zip(rows[ok], cols[ok])]


def clear_counts(data: EvalData, threshold: float) -> ClearCounts:
    counts = ClearCounts()
    last_match: dict[int, int] = {}   # gt id -> pred id at its last matched frame
    prev_frame: dict[int, int] = {}   # gt id -> pred id in the last frame that had any matching
    for fr in data.frames:
        n_gt, n_pred = len(fr.gt_ids), len(fr.pred_ids)
        if n_gt == 0 or n_pred == 0:
            counts.fn += n_gt
            counts.fp += n_pred
            continue
        pairs = match_frame(fr.similarity, threshold, fr.gt_ids, fr.pred_ids, prev_frame)
        current = {}
        for r, c in pairs:
            g, p = int(fr.gt_ids[r]), int(fr.pred_ids[c])
            if g in last_match and last_match[g] != p:
                counts.idsw += 1
            last_match[g] = p
            current[g] = p
            counts.motp_sum += float(fr.similarity[r, c])
        prev_frame = current
        counts.tp += len(pairs)
        counts.fn += n_gt - len(pairs)
        counts.fp += n_pred - len(pairs)
    return counts


# ---------------------------------------------------------------- HOTA

@dataclass
class HotaCounts:
    alphas: tuple
    tp: np.ndarray
    fn: np.ndarray
    fp: np.ndarray
    ass_sum: np.ndarray  # sum over true positives of their association score

    @classmethod
    def zeros(cls, alphas) -> "HotaCounts":
        z = np.zeros(len(alphas))
        return cls(tuple(alphas), z.copy(), z.copy(), z.copy(), z.copy())

    @property
    def vacuous(self) -> bool:
        """No ground truth and no predictions at all."""
        return not (self.tp.any() or self.fn.any() or self.fp.any())

    @property
    def det_a_per_alpha(self) -> np.ndarray:
        if self.vacuous:
            return np.ones(len(self.alphas))
        return self.tp / np.maximum(1.0, self.tp + self.fn + self.fp)

    @property
    def ass_a_per_alpha(self) -> np.ndarray:
        if self.vacuous:
            return np.ones(len(self.alphas))
        return self.ass_sum / np.maximum(1.0, self.tp)

    @property
    def hota_per_alpha(self) -> np.ndarray:
        return np.sqrt(self.det_a_per_alpha * self.ass_a_per_alpha)

    @property
    def hota(self) -> float:
        return 100.0 * float(np.mean(self.hota_per_alpha))

    @property
    def det_a(self) -> float:
        return 100.0 * float(np.mean(self.det_a_per_alpha))

    @property
    def ass_a(self) -> float:
        return 100.0 * float(np.mean(self.ass_a_per_alpha))

    def __add__(self, other: "HotaCounts") -> "HotaCounts":
        if self.alphas != other.alphas:
            raise ValueError("cannot combine HOTA counts over different alpha grids")
        return HotaCounts(self.alphas, self.tp + other.tp, self.fn + other.fn, self.fp + other.fp,
                          self.ass_sum + other.ass_sum)


def hota_counts(data: EvalData, alphas: Sequence[float]) -> HotaCounts:
    alphas = tuple(alphas)
    out = HotaCounts.zeros(alphas)
    n_a = len(alphas)
    G, P = data.num_gt_ids, data.num_pred_ids

    # global alignment between id pairs accumulated over the whole sequence
    potential = np.zeros((G, P))
    gt_count = np.zeros(G)
    pred_count = np.zeros(P)
    for fr in data.frames:
        gt_count[fr.gt_ids] += 1
        pred_count[fr.pred_ids] += 1
        if fr.similarity.size == 0:
            continue
        sim = fr.similarity
        denom = sim.sum(0)[None, :] + sim.sum(1)[:, None] - sim
        sim_iou = np.zeros_like(sim)
        mask = denom > _EPS
        sim_iou[mask] = sim[mask] / denom[mask]
        potential[fr.gt_ids[:, None], fr.pred_ids[None, :]] += sim_iou
    with np.errstate(divide="ignore", invalid="ignore"):
        alignment = potential / (gt_count[:, None] + pred_count[None, :] - potential)
    alignment = np.nan_to_num(alignment)

    matches = np.zeros((n_a, G, P))
    for fr in data.frames:
        n_gt, n_pred = len(fr.gt_ids), len(fr.pred_ids)
        if n_gt == 0 or n_pred == 0:
            out.fn += n_gt
            out.fp += n_pred
            continue
        sim = fr.similarity
        score = alignment[fr.gt_ids[:, None], fr.pred_ids[None, :]] * sim
        rows, cols = linear_sum_assignment(score, maximize=True)
        for a, alpha in enumerate(alphas):
            ok = sim[rows, cols] >= alpha - _EPS
            r, c = rows[ok], cols[ok]
            n = len(r)
            out.tp[a] += n
            out.fn[a] += n_gt - n
            out.fp[a] += n_pred - n
            if n:
                matches[a, fr.gt_ids[r], fr.pred_ids[c]] += 1

    for a in range(n_a):
        m = matches[a]
        ass = m / np.maximum(1.0, gt_count[:, None] + pred_count[None, :] - m)
        out.ass_sum[a] = float((m * ass).sum())
    return out


# ---------------------------------------------------------------- public API

def evaluate_counts(gt_tracks, pred_tracks, config: MatchingConfig, num_frames=None):
    """Raw CLEAR and HOTA counts for one sequence, summed over the configured classes."""
    clear = ClearCounts()
    hota = HotaCounts.zeros(config.hota_alphas)
    for cls in config.classes:
        data = prepare(gt_tracks, pred_tracks, config, cls, num_frames)
        clear = clear + clear_counts(data, config.clear_threshold)
        hota = hota + hota_counts(data, config.hota_alphas)
    return clear, hota


def compute_clear(gt_tracks, pred_tracks, config: Optional[MatchingConfig] = None, num_frames=None) -> ClearCounts:
    config = config or MatchingConfig()
    return evaluate_counts(gt_tracks, pred_tracks, config, num_frames)[0]


def compute_hota(gt_tracks, pred_tracks, config: Optional[MatchingConfig] = None, num_frames=None) -> HotaCounts:
    config = config or MatchingConfig()
    return evaluate_counts(gt_tracks, pred_tracks, config, num_frames)[1]


@dataclass
class MetricsReport:
    hota: float
    det_a: float
    ass_a: float
    mota: Optional[float]
    motp: float
    fp: int
    fn: int
    idsw: int
    gt_count: int
    eff_target: Optional[float] = None
    sys_draw_w: Optional[float] = None
    yield_w_per_hota: Optional[float] = None
    flags: list = field(default_factory=list)

    @classmethod
    def from_counts(cls, clear: ClearCounts, hota: HotaCounts, **extra) -> "MetricsReport":
        flags = []
        try:
            mota = clear.mota
        except UndefinedMetricError:
            mota = None
            flags.append("mota-undefined")
        if hota.vacuous:
            flags.append("hota-vacuous")
        return cls(hota.hota, hota.det_a, hota.ass_a, mota, clear.motp, clear.fp, clear.fn, clear.idsw,
                   clear.gt_count, flags=flags, **extra)

    def as_dict(self) -> dict:
        return asdict(self)

    def row(self) -> dict:
        """The stable report fields only."""
        return {k: getattr(self, k) for k in REPORT_FIELDS}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True, allow_nan=False,
                          default=lambda o: None)


def format_value(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "-"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)
