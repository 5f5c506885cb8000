#!/usr/bin/python3
"""
Evaluation of suspicion curves.

Curve fitting metrics (MSE, MAE, R squared), segmentation of a curve into
uncertain/suspicious/alert level segments, temporal IoU, mean average
precision of level segments over IoU thresholds, and the autocorrelation and
cumulative-effect analyses of a single curve.
"""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .constants import IOU_THRESHOLDS, LEVEL_CEILING, LEVEL_THRESHOLDS, LEVELS
from .errors import ArgumentError, ConfigError, DataError
from .logger import get_logger
from .suspicion_engine import SuspicionCurve

logger = get_logger(__name__)


@dataclass(frozen=True)
class EvaluationConfig:
    """Level thresholds, localisation IoU thresholds and segment post-processing."""
    thresholds: tuple[float, float] = LEVEL_THRESHOLDS
    iou_thresholds: tuple[float, ...] = IOU_THRESHOLDS
    min_len: int = 1
    smooth_width: int = 0
    max_lag: int = 50

    def __post_init__(self) -> None:
        low, high = self.thresholds
        if not 0 < low < high < LEVEL_CEILING:
            raise ConfigError('evaluation.thresholds', f"expected 0 < low < high < 1, got {list(self.thresholds)}")
        if not self.iou_thresholds or any(not 0 < t <= 1 for t in self.iou_thresholds):
            raise ConfigError('evaluation.iou_thresholds', "expected a non-empty list of values in (0, 1]")
        if isinstance(self.min_len, bool) or not isinstance(self.min_len, int) or self.min_len < 1:
            raise ConfigError('evaluation.min_len', f"expected a positive integer, got {self.min_len}")
        if isinstance(self.smooth_width, bool) or not isinstance(self.smooth_width, int) or self.smooth_width < 0:
            raise ConfigError('evaluation.smooth_width', f"expected a non-negative integer, got {self.smooth_width}")
        if self.smooth_width > 1 and self.smooth_width % 2 == 0:
            raise ConfigError('evaluation.smooth_width', f"median width must be odd, got {self.smooth_width}")
        if isinstance(self.max_lag, bool) or not isinstance(self.max_lag, int) or self.max_lag < 1:
            raise ConfigError('evaluation.max_lag', f"expected a positive integer, got {self.max_lag}")


@dataclass(frozen=True)
class LevelSegment:
    """Maximal run of frames in one suspicion level, frames inclusive."""
    level: str
    start_frame: int
    end_frame: int
    confidence: float = 1.0

    def __post_init__(self) -> None:
        if self.level not in LEVELS:
            raise ArgumentError(f"Unknown level '{self.level}'")
        if self.start_frame > self.end_frame:
            raise ArgumentError(f"Segment start {self.start_frame} after end {self.end_frame}")

    @property
    def length(self) -> int:
        return self.end_frame - self.start_frame + 1


@dataclass(frozen=True)
class CurveMetrics:
    """Fit of a predicted curve; ``r2`` is None when undefined (constant ground truth, imperfect fit)."""
    mse: float
    mae: float
    r2: float | None


def _scores(curve) -> np.ndarray:
    if isinstance(curve, SuspicionCurve):
        return curve.scores
    return np.asarray(curve, dtype=np.float64).ravel()


def _aligned(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    pred, gt = _scores(pred), _scores(gt)
    if pred.shape != gt.shape:
        raise ArgumentError(f"Prediction has {pred.size} frames, ground truth has {gt.size}")
    if pred.size < 1:
        raise ArgumentError("Curves must hold at least one frame")
    return pred, gt


def curve_metrics(pred, gt) -> CurveMetrics:
    """
    Mean squared error, mean absolute error and coefficient of determination.

    Args:
        pred (SuspicionCurve | array-like): Predicted scores
        gt (SuspicionCurve | array-like): Ground-truth scores

    Returns:
        CurveMetrics: Metrics; r2 is 1 for a perfect fit of a constant curve
    """
    pred, gt = _aligned(pred, gt)
    error = pred - gt
    ss_res = float(np.sum(error ** 2))
    ss_tot = float(np.sum((gt - gt.mean()) ** 2))
    if ss_tot > 0:
        r2 = 1.0 - ss_res / ss_tot
    elif ss_res == 0:
        r2 = 1.0
    else:
        logger.warning("R2 undefined: ground truth is constant and the prediction differs")
        r2 = None
    return CurveMetrics(float(np.mean(error ** 2)), float(np.mean(np.abs(error))), r2)


def diff_mse(pred, gt) -> float:
    """Mean squared error of first-order differences (0 for one-frame curves)."""
    pred, gt = _aligned(pred, gt)
    if pred.size < 2:
        return 0.0
    return float(np.mean((np.diff(pred) - np.diff(gt)) ** 2))


def level_indices(scores, thresholds=LEVEL_THRESHOLDS) -> np.ndarray:
    """Per-frame level index into LEVELS; band bounds are lower-inclusive."""
    return np.digitize(_scores(scores), thresholds, right=False)


def median_smooth(scores, width: int) -> np.ndarray:
    """
    Odd-width running median with edge padding.

    Raises:
        ArgumentError: If ``width`` is even
    """
    scores = _scores(scores)
    if width <= 1:
        return scores.copy()
    if width % 2 == 0:
        raise ArgumentError(f"Median filter width must be odd, got {width}")
    padded = np.pad(scores, width // 2, mode='edge')
    return np.median(sliding_window_view(padded, width), axis=1)


def _band_edges(thresholds) -> list[tuple[float, float]]:
    low, high = thresholds
    return [(0.0, low), (low, high), (high, LEVEL_CEILING)]


def band_membership(scores, level: int, thresholds=LEVEL_THRESHOLDS) -> np.ndarray:
    """Triangular membership in a level band: 1 at the band centre, 0 at its edges."""
    lower, upper = _band_edges(thresholds)[level]
    centre = (lower + upper) / 2.0
    half = (upper - lower) / 2.0
    return np.clip(1.0 - np.abs(_scores(scores) - centre) / half, 0.0, 1.0)


def _runs(levels: np.ndarray) -> list[list[int]]:
    change = np.flatnonzero(np.diff(levels)) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change - 1, [levels.size - 1]])
    return [[int(levels[s]), int(s), int(e)] for s, e in zip(starts, ends)]


def _merge_equal(runs: list[list[int]]) -> list[list[int]]:
    merged = [runs[0]]
    for run in runs[1:]:
        if run[0] == merged[-1][0]:
            merged[-1][2] = run[2]
        else:
            merged.append(run)
    return merged


def _absorb_short(runs: list[list[int]], min_len: int) -> list[list[int]]:
    while len(runs) > 1:
        short = next((i for i, (_, s, e) in enumerate(runs) if e - s + 1 < min_len), None)
        if short is None:
            break
        _, start, end = runs.pop(short)
        if short > 0:
            runs[short - 1][2] = end
        else:
            runs[0][1] = start
        runs = _merge_equal(runs)
    return runs


def segment_levels(curve, thresholds=LEVEL_THRESHOLDS, min_len: int = 1, smooth_width: int = 0) -> list[LevelSegment]:
    """
    Split a curve into maximal runs of equal suspicion level.

    Levels are uncertain below the first threshold, suspicious up to the second
    and alert from the second threshold on. Runs shorter than ``min_len`` are
    absorbed into the preceding run (the following one at the start).

    Args:
        curve (SuspicionCurve | array-like): Scores in [0, 1]
        thresholds (tuple[float, float]): Level thresholds
        min_len (int): Minimum segment length in frames
        smooth_width (int): Odd median pre-filter width, 0 for none

    Returns:
        list[LevelSegment]: Ordered, disjoint segments covering every frame
    """
    scores = _scores(curve)
    if scores.size == 0:
        return []
    if not np.all(np.isfinite(scores)) or np.any(scores < 0) or np.any(scores > LEVEL_CEILING):
        raise ArgumentError("Curve values must be finite and within [0, 1]")
    if min_len < 1:
        raise ArgumentError(f"min_len must be at least 1, got {min_len}")
    scores = median_smooth(scores, smooth_width)
    runs = _absorb_short(_runs(level_indices(scores, thresholds)), min_len)
    segments = []
    for level, start, end in runs:
        membership = band_membership(scores[start:end + 1], level, thresholds)
        segments.append(LevelSegment(LEVELS[level], start, end, float(membership.mean())))
    logger.trace("Segmented %d frames into %d level segments", scores.size, len(segments))
    return segments


def temporal_iou(a: LevelSegment, b: LevelSegment) -> float:
    """Intersection over union of two inclusive frame intervals."""
    intersection = min(a.end_frame, b.end_frame) - max(a.start_frame, b.start_frame) + 1
    if intersection <= 0:
        return 0.0
    union = max(a.end_frame, b.end_frame) - min(a.start_frame, b.start_frame) + 1
    return intersection / union


def _ap_from_pr(precision: np.ndarray, recall: np.ndarray) -> float:
    envelope = np.hstack([[0.0], precision, [0.0]])
    steps = np.hstack([[0.0], recall, [1.0]])
    envelope = np.maximum.accumulate(envelope[::-1])[::-1]
    changed = np.flatnonzero(steps[1:] != steps[:-1]) + 1
    return float(np.sum((steps[changed] - steps[changed - 1]) * envelope[changed]))


def _average_precision(predictions: list[tuple[str, LevelSegment]], truths: list[tuple[str, LevelSegment]],
                       threshold: float) -> float:
    if not truths:
        return 0.0
    if not predictions:
        return 0.0
    order = sorted(range(len(predictions)), key=lambda i: -predictions[i][1].confidence)
    locked = set()
    hits = np.zeros(len(predictions))
    for rank, index in enumerate(order):
        key, segment = predictions[index]
        candidates = [(temporal_iou(segment, gt), j) for j, (gt_key, gt) in enumerate(truths) if gt_key == key]
        for iou, j in sorted(candidates, key=lambda c: -c[0]):
            if iou < threshold:
                break
            if j in locked:
                continue
            locked.add(j)
            hits[rank] = 1.0
            break
    true_positives = np.cumsum(hits)
    precision = true_positives / np.arange(1, len(hits) + 1)
    recall = true_positives / len(truths)
    return _ap_from_pr(precision, recall)


@dataclass
class MAPReport:
    """
    Localisation quality of level segments.

    ``mean_ap`` maps each IoU threshold to the mean AP over the levels present in
    the ground truth; ``per_level`` holds the AP of every level (None when the
    level is absent from the ground truth).
    """
    iou_thresholds: tuple[float, ...]
    mean_ap: dict[float, float | None]
    per_level: dict[float, dict[str, float | None]]
    empty: bool = False

    @property
    def average(self) -> float | None:
        values = [v for v in self.mean_ap.values() if v is not None]
        return float(np.mean(values)) if values else None


def _keyed(segments) -> list[tuple[str, LevelSegment]]:
    if isinstance(segments, dict):
        return [(key, s) for key in sorted(segments) for s in segments[key]]
    return [('', s) for s in segments]


def mean_average_precision(pred, gt, iou_thresholds=IOU_THRESHOLDS) -> MAPReport:
    """
    Mean average precision of predicted level segments.

    Per level, predictions are ranked by confidence and greedily matched one to
    one with unmatched ground-truth segments of the same level (and sequence)
    in order of decreasing IoU. AP is the area under the monotone precision
    envelope; the mean runs over the levels present in the ground truth.

    Args:
        pred (list[LevelSegment] | dict[str, list[LevelSegment]]): Predictions, optionally keyed by sequence id
        gt (list[LevelSegment] | dict[str, list[LevelSegment]]): Ground truth with the same keying
        iou_thresholds (Sequence[float]): IoU thresholds

    Returns:
        MAPReport: Per-threshold mAP and per-level AP; flagged empty when there is nothing to match
    """
    predictions, truths = _keyed(pred), _keyed(gt)
    iou_thresholds = tuple(float(t) for t in iou_thresholds)
    if not predictions and not truths:
        logger.warning("No predicted and no ground-truth segments, mAP report is empty")
        return MAPReport(iou_thresholds, {t: None for t in iou_thresholds},
                         {t: {level: None for level in LEVELS} for t in iou_thresholds}, empty=True)
    present = [level for level in LEVELS if any(s.level == level for _, s in truths)]
    mean_ap, per_level = {}, {}
    for threshold in iou_thresholds:
        per_level[threshold] = {}
        for level in LEVELS:
            if level not in present:
                per_level[threshold][level] = None
                continue
            per_level[threshold][level] = _average_precision(
                [p for p in predictions if p[1].level == level], [g for g in truths if g[1].level == level], threshold)
        values = [per_level[threshold][level] for level in present]
        mean_ap[threshold] = float(np.mean(values)) if values else None
    return MAPReport(iou_thresholds, mean_ap, per_level)


def autocorrelation(curve, max_lag: int) -> np.ndarray:
    """
    Pearson correlation of the curve with itself shifted by 0..max_lag frames.

    Lags whose windows are constant are undefined and returned as NaN.

    Raises:
        ArgumentError: Unless 1 <= max_lag < number of frames
    """
    scores = _scores(curve)
    if not 1 <= max_lag < scores.size:
        raise ArgumentError(f"max_lag must satisfy 1 <= max_lag < {scores.size}, got {max_lag}")
    result = np.full(max_lag + 1, np.nan)
    result[0] = 1.0
    for lag in range(1, max_lag + 1):
        head, tail = scores[:scores.size - lag], scores[lag:]
        head_c, tail_c = head - head.mean(), tail - tail.mean()
        denominator = math.sqrt(float(np.sum(head_c ** 2)) * float(np.sum(tail_c ** 2)))
        if denominator > 0:
            result[lag] = float(np.sum(head_c * tail_c)) / denominator
        else:
            logger.debug("Autocorrelation at lag %d undefined (constant window)", lag)
    return result


def cumulative_effect(curve) -> np.ndarray:
    """Running sum of the scores."""
    return np.cumsum(_scores(curve))


@dataclass
class EvalReport:
    """Metrics of a set of predicted curves against their ground truth."""
    num_sequences: int
    mse: float
    mae: float
    r2: float | None
    diff_mse: float
    map: MAPReport
    per_sequence: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "num_sequences": self.num_sequences,
            "mse": self.mse,
            "mae": self.mae,
            "r2": self.r2,
            "diff_mse": self.diff_mse,
            "map": {f"{t:g}": v for t, v in self.map.mean_ap.items()},
            "average_map": self.map.average,
            "per_level_ap": {f"{t:g}": levels for t, levels in self.map.per_level.items()},
            "empty": self.map.empty,
        }

    def save_json(self, path: str) -> None:
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2)
        logger.debug("Wrote evaluation report to %s", path)

    def save_per_sequence_csv(self, path: str) -> None:
        with open(path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.DictWriter(f, fieldnames=['sequence_id', 'frames', 'mse', 'mae', 'r2', 'diff_mse'])
            writer.writeheader()
            for row in self.per_sequence:
                writer.writerow({k: ('' if v is None else v) for k, v in row.items()})


def evaluate_dataset(preds: list[SuspicionCurve], gts: list[SuspicionCurve],
                     config: EvaluationConfig = EvaluationConfig()) -> EvalReport:
    """
    Evaluate predicted curves against ground-truth curves of the same sequences.

    Curve metrics are pooled over all frames. Predicted segments use the
    configured smoothing and minimum length; ground-truth segments use the
    plain thresholds. Segments are matched only within their own sequence.

    Args:
        preds (list[SuspicionCurve]): Predicted curves
        gts (list[SuspicionCurve]): Ground-truth curves in the same order
        config (EvaluationConfig): Evaluation settings

    Returns:
        EvalReport: Pooled metrics, mAP and per-sequence rows

    Raises:
        DataError: If the curve lists do not pair up
    """
    if len(preds) != len(gts):
        raise DataError(f"{len(preds)} predicted curves but {len(gts)} ground-truth curves")
    if not preds:
        raise DataError("Nothing to evaluate: no curves given")
    rows = []
    pred_segments, gt_segments = {}, {}
    diffs_pred, diffs_gt = [], []
    for pred, gt in zip(preds, gts):
        if pred.sequence_id != gt.sequence_id:
            raise DataError(f"Curve pairing mismatch: '{pred.sequence_id}' vs '{gt.sequence_id}'")
        if len(pred) != len(gt):
            raise DataError(f"Sequence '{gt.sequence_id}': prediction has {len(pred)} frames, ground truth {len(gt)}")
        metrics = curve_metrics(pred, gt)
        rows.append({"sequence_id": gt.sequence_id, "frames": len(gt), "mse": metrics.mse, "mae": metrics.mae,
                     "r2": metrics.r2, "diff_mse": diff_mse(pred, gt)})
        diffs_pred.append(np.diff(pred.scores))
        diffs_gt.append(np.diff(gt.scores))
        pred_segments[gt.sequence_id] = segment_levels(pred, config.thresholds, config.min_len, config.smooth_width)
        gt_segments[gt.sequence_id] = segment_levels(gt, config.thresholds)
    pooled = curve_metrics(np.concatenate([p.scores for p in preds]), np.concatenate([g.scores for g in gts]))
    steps_pred, steps_gt = np.concatenate(diffs_pred), np.concatenate(diffs_gt)
    pooled_diff = float(np.mean((steps_pred - steps_gt) ** 2)) if steps_pred.size else 0.0
    map_report = mean_average_precision(pred_segments, gt_segments, config.iou_thresholds)
    logger.info("Evaluated %d sequences: MSE %.6g, MAE %.6g, average mAP %s",
                len(preds), pooled.mse, pooled.mae, map_report.average)
    return EvalReport(len(preds), pooled.mse, pooled.mae, pooled.r2, pooled_diff, map_report, rows)
