"""Detection metrics: IoU, greedy matching, 101-point AP, mAP, model-view stats.

Matching and AP follow the COCO conventions: per-class confidence-descending
greedy matching against the unmatched ground truth with highest IoU, and AP as
the mean of right-monotone interpolated precision at 101 recall points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

MAP_50_95_THRESHOLDS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))
RECALL_POINTS = np.linspace(0.0, 1.0, 101)


class EvaluationError(Exception):
    pass


class DegenerateBox(EvaluationError):
    pass


class EmptyEvalSet(EvaluationError):
    pass


Box = tuple[float, float, float, float]  # (cx, cy, w, h)


@dataclass(frozen=True)
class PredictedBox:
    class_id: int
    box: Box
    confidence: float


@dataclass
class DetectionMatch:
    matched_gt: Optional[int]
    iou: float
    is_tp: bool


@dataclass
class MatchResult:
    matches: list[DetectionMatch]  # one per detection, detection order preserved
    fn_count: int

    @property
    def tp_count(self) -> int:
        return sum(m.is_tp for m in self.matches)

    @property
    def fp_count(self) -> int:
        return len(self.matches) - self.tp_count


@dataclass
class EvalReport:
    map50: float
    map75: float
    map50_95: float
    precision: float
    recall: float
    per_class_ap50: dict[int, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "map50": self.map50,
            "map75": self.map75,
            "map50_95": self.map50_95,
            "precision": self.precision,
            "recall": self.recall,
            "per_class_ap50": {str(k): v for k, v in self.per_class_ap50.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            map50=d["map50"],
            map75=d["map75"],
            map50_95=d["map50_95"],
            precision=d["precision"],
            recall=d["recall"],
            per_class_ap50={int(k): v for k, v in d.get("per_class_ap50", {}).items()},
        )


@dataclass
class ClassBalance:
    prior_count: dict[int, int]
    new_count: dict[int, int]


@dataclass
class ClassConfidenceSummary:
    empty: bool
    min: float = 0.0
    q1: float = 0.0
    median: float = 0.0
    q3: float = 0.0
    max: float = 0.0
    outliers: list[float] = field(default_factory=list)


def center_to_corners(box: Box) -> tuple[float, float, float, float]:
    cx, cy, w, h = box
    return (cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)


def corners_to_center(x1: float, y1: float, x2: float, y2: float) -> Box:
    return ((x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1)


def iou(a: Box, b: Box) -> float:
    """Intersection area over union area of two center-format boxes."""
    if a[2] <= 0 or a[3] <= 0 or b[2] <= 0 or b[3] <= 0:
        raise DegenerateBox("boxes must have positive width and height")
    ax1, ay1, ax2, ay2 = center_to_corners(a)
    bx1, by1, bx2, by2 = center_to_corners(b)
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a[2] * a[3] + b[2] * b[3] - inter
    return inter / union


def match_detections(
    dets: Sequence[PredictedBox],
    gts: Sequence[tuple[int, Box]],
    iou_thresh: float = 0.5,
) -> MatchResult:
    """Per-class greedy matching, highest-confidence detections first.

    Each ground-truth box matches at most one detection; unmatched detections
    are false positives and unmatched ground truths are false negatives.
    """
    matches = [DetectionMatch(None, 0.0, False) for _ in dets]
    gt_taken = [False] * len(gts)
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, i))
    for i in order:
        det = dets[i]
        best_iou = 0.0
        best_j = None
        for j, (gt_class, gt_box) in enumerate(gts):
            if gt_taken[j] or gt_class != det.class_id:
                continue
            overlap = iou(det.box, gt_box)
            if overlap >= iou_thresh and overlap > best_iou:
                best_iou = overlap
                best_j = j
        if best_j is not None:
            gt_taken[best_j] = True
            matches[i] = DetectionMatch(best_j, best_iou, True)
    fn = gt_taken.count(False)
    return MatchResult(matches=matches, fn_count=fn)


def _interp_ap(tp_flags: np.ndarray, n_gt: int) -> float:
    """101-point interpolated AP from confidence-ordered TP flags."""
    if n_gt == 0:
        return 0.0
    if tp_flags.size == 0:
        return 0.0
    tp_cum = np.cumsum(tp_flags)
    fp_cum = np.cumsum(1 - tp_flags)
    recall = tp_cum / n_gt
    precision = tp_cum / (tp_cum + fp_cum)
    # right-to-left running max makes precision monotone from the right
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    interpolated = np.where(idx < recall.size, precision[np.minimum(idx, recall.size - 1)], 0.0)
    return float(interpolated.mean())


def _collect_class_stats(
    dets_by_image: Mapping[str, Sequence[PredictedBox]],
    gts_by_image: Mapping[str, Sequence[tuple[int, Box]]],
    iou_thresh: float,
) -> dict[int, tuple[np.ndarray, np.ndarray, int]]:
    """Per class: (confidences desc, tp flags aligned, total gt count)."""
    class_ids = {d.class_id for dets in dets_by_image.values() for d in dets}
    class_ids |= {c for gts in gts_by_image.values() for c, _ in gts}
    conf: dict[int, list[float]] = {c: [] for c in class_ids}
    flags: dict[int, list[int]] = {c: [] for c in class_ids}
    n_gt = {c: 0 for c in class_ids}
    for image_id in sorted(set(dets_by_image) | set(gts_by_image)):
        dets = list(dets_by_image.get(image_id, ()))
        gts = list(gts_by_image.get(image_id, ()))
        for c, _ in gts:
            n_gt[c] += 1
        result = match_detections(dets, gts, iou_thresh)
        for det, m in zip(dets, result.matches):
            conf[det.class_id].append(det.confidence)
            flags[det.class_id].append(int(m.is_tp))
    out = {}
    for c in class_ids:
        order = np.argsort(-np.asarray(conf[c], dtype=np.float64), kind="stable")
        out[c] = (
            np.asarray(conf[c], dtype=np.float64)[order],
            np.asarray(flags[c], dtype=np.int64)[order],
            n_gt[c],
        )
    return out


def average_precision(
    dets_by_image: Mapping[str, Sequence[PredictedBox]],
    gts_by_image: Mapping[str, Sequence[tuple[int, Box]]],
    class_id: int,
    iou_thresh: float = 0.5,
) -> Optional[float]:
    """AP for one class at one IoU threshold; None when the class is absent."""
    stats = _collect_class_stats(dets_by_image, gts_by_image, iou_thresh)
    if class_id not in stats:
        return None
    _, flags, n_gt = stats[class_id]
    if n_gt == 0 and flags.size == 0:
        return None
    return _interp_ap(flags, n_gt)


def _mean_ap_at(stats: dict[int, tuple[np.ndarray, np.ndarray, int]]) -> tuple[float, dict[int, float]]:
    per_class = {}
    for c, (_, flags, n_gt) in stats.items():
        if n_gt == 0 and flags.size == 0:
            continue  # class absent from gts and dets: undefined, excluded
        per_class[c] = _interp_ap(flags, n_gt)
    if not per_class:
        return 0.0, {}
    return float(np.mean(list(per_class.values()))), per_class


def _precision_recall_max_f1(
    stats: dict[int, tuple[np.ndarray, np.ndarray, int]],
) -> tuple[float, float]:
    """Operating point: the confidence cut maximizing F1 over all classes."""
    entries = []  # (confidence, is_tp)
    total_gt = 0
    for _, (conf, flags, n_gt) in stats.items():
        total_gt += n_gt
        entries.extend(zip(conf.tolist(), flags.tolist()))
    if not entries or total_gt == 0:
        return 0.0, 0.0
    entries.sort(key=lambda e: -e[0])
    flags = np.asarray([f for _, f in entries], dtype=np.float64)
    tp = np.cumsum(flags)
    fp = np.cumsum(1.0 - flags)
    precision = tp / (tp + fp)
    recall = tp / total_gt
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(denom), where=denom > 0)
    best = int(np.argmax(f1))
    return float(precision[best]), float(recall[best])


def map_metrics(
    dets_by_image: Mapping[str, Sequence[PredictedBox]],
    gts_by_image: Mapping[str, Sequence[tuple[int, Box]]],
) -> EvalReport:
    """mAP50/mAP75/mAP50-95 plus a max-F1 precision/recall point at IoU 0.5."""
    if not gts_by_image:
        raise EmptyEvalSet("no evaluation images")
    per_threshold = {}
    per_class_ap50: dict[int, float] = {}
    for thr in MAP_50_95_THRESHOLDS:
        stats = _collect_class_stats(dets_by_image, gts_by_image, thr)
        mean_ap, per_class = _mean_ap_at(stats)
        per_threshold[thr] = mean_ap
        if thr == 0.5:
            per_class_ap50 = per_class
            precision, recall = _precision_recall_max_f1(stats)
    return EvalReport(
        map50=per_threshold[0.5],
        map75=per_threshold[0.75],
        map50_95=float(np.mean([per_threshold[t] for t in MAP_50_95_THRESHOLDS])),
        precision=precision,
        recall=recall,
        per_class_ap50=per_class_ap50,
    )


def class_balance(
    annotations: Sequence[tuple[int, int]],  # (class_id, iteration)
    iteration_boundary: int,
) -> ClassBalance:
    """Instances labeled before the boundary vs during it, per class."""
    prior: dict[int, int] = {}
    new: dict[int, int] = {}
    for class_id, iteration in annotations:
        if iteration < iteration_boundary:
            prior[class_id] = prior.get(class_id, 0) + 1
        elif iteration == iteration_boundary:
            new[class_id] = new.get(class_id, 0) + 1
    return ClassBalance(prior_count=prior, new_count=new)


def confidence_distribution(
    detections: Sequence[PredictedBox],
    class_ids: Sequence[int],
) -> dict[int, ClassConfidenceSummary]:
    """Per-class five-number summary with Tukey 1.5*IQR outliers."""
    out: dict[int, ClassConfidenceSummary] = {}
    for c in class_ids:
        vals = np.asarray(
            sorted(d.confidence for d in detections if d.class_id == c), dtype=np.float64
        )
        if vals.size == 0:
            out[c] = ClassConfidenceSummary(empty=True)
            continue
        q1, median, q3 = np.percentile(vals, [25, 50, 75])
        iqr = q3 - q1
        lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
        outliers = [float(v) for v in vals if v < lo or v > hi]
        out[c] = ClassConfidenceSummary(
            empty=False,
            min=float(vals.min()),
            q1=float(q1),
            median=float(median),
            q3=float(q3),
            max=float(vals.max()),
            outliers=outliers,
        )
    return out


def trajectory_csv_rows(strategy: str, trajectory: Sequence[EvalReport]) -> list[str]:
    """CSV rows `strategy,iteration,map50_95,map50,map75,precision,recall`."""
    rows = ["strategy,iteration,map50_95,map50,map75,precision,recall"]
    for i, report in enumerate(trajectory):
        rows.append(
            f"{strategy},{i},{report.map50_95!r},{report.map50!r},"
            f"{report.map75!r},{report.precision!r},{report.recall!r}"
        )
    return rows
