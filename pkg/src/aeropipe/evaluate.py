"""Confidence-driven non-maximum suppression and average-precision scoring.

NMS keeps a confidence-descending antichain: a detection survives only if
no already-kept detection overlaps it beyond the IoU threshold. The AP
harness greedily matches predictions to ground truth, highest confidence
first, one use per ground-truth box, and integrates the all-point
interpolated precision-recall curve.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .annotations import AnnotationRecord
from .geometry import BBox, iou


@dataclass
class Detection:
    """One decoded box with its per-track prediction bundle."""

    box: BBox
    confidence: float
    primary_dist: np.ndarray = field(default_factory=lambda: np.array([1.0]))
    secondary_dist: np.ndarray = field(default_factory=lambda: np.array([1.0]))
    track_id: int = -1
    frame_id: int = 0

    @property
    def primary_action(self) -> int:
        return int(np.argmax(self.primary_dist))

    @property
    def secondary_action(self) -> int:
        return int(np.argmax(self.secondary_dist))


@dataclass
class EvalConfig:
    iou_threshold: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 < self.iou_threshold < 1.0:
            raise ValueError(f"iou_threshold must be in (0, 1), got {self.iou_threshold}")


def nms(detections: list[Detection], iou_threshold: float, score_floor: float = 0.3) -> list[Detection]:
    """Suppress low-confidence overlapping detections.

    Candidates below score_floor are removed first; the rest are visited by
    descending confidence (ties by (y0, x0)) and kept only when every
    previously kept box overlaps them with IoU <= iou_threshold.
    """
    alive = [d for d in detections if d.confidence >= score_floor]
    alive.sort(key=lambda d: (-d.confidence, d.box.y0, d.box.x0))
    kept: list[Detection] = []
    for det in alive:
        if all(iou(det.box, k.box) <= iou_threshold for k in kept):
            kept.append(det)
    return kept


def _interpolated_ap(recall: np.ndarray, precision: np.ndarray) -> float:
    """Area under the all-point-interpolated precision envelope."""
    r = np.concatenate([[0.0], recall, [1.0]])
    p = np.concatenate([[0.0], precision, [0.0]])
    for i in range(len(p) - 2, -1, -1):
        p[i] = max(p[i], p[i + 1])
    steps = np.nonzero(r[1:] != r[:-1])[0]
    return float(((r[steps + 1] - r[steps]) * p[steps + 1]).sum())


@dataclass
class PrCurve:
    recall: np.ndarray
    precision: np.ndarray

    def write_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("recall,precision\n")
            for r, p in zip(self.recall, self.precision):
                fh.write(f"{r:.6f},{p:.6f}\n")


def _match_predictions(
    predictions: dict[int, list[Detection]],
    ground_truth: dict[int, list[AnnotationRecord]],
    iou_threshold: float,
    gt_label=None,
    det_label=None,
    wanted_label: int | None = None,
) -> tuple[np.ndarray, int]:
    """Global confidence-sorted TP flags plus the ground-truth count.

    When wanted_label is given, only predictions whose extracted label
    equals it participate and only ground truth with that label counts.
    """
    gts: dict[int, list[AnnotationRecord]] = {}
    total_gt = 0
    for fid, records in ground_truth.items():
        rows = [r for r in records if wanted_label is None or gt_label(r) == wanted_label]
        gts[fid] = rows
        total_gt += len(rows)

    flat: list[tuple[float, int, int, Detection]] = []
    for fid, dets in predictions.items():
        for k, det in enumerate(dets):
            if wanted_label is not None and det_label(det) != wanted_label:
                continue
            flat.append((det.confidence, fid, k, det))
    # Highest confidence first; frame and in-frame order break ties.
    flat.sort(key=lambda item: (-item[0], item[1], item[2]))

    tp = np.zeros(len(flat), dtype=bool)
    used: dict[int, set[int]] = {fid: set() for fid in gts}
    for rank, (_, fid, _, det) in enumerate(flat):
        candidates = gts.get(fid, [])
        best_iou, best_idx = 0.0, -1
        for gi, record in enumerate(candidates):
            if gi in used.get(fid, set()):
                continue
            value = iou(det.box, record.box)
            if value > best_iou:
                best_iou, best_idx = value, gi
        if best_idx >= 0 and best_iou >= iou_threshold:
            tp[rank] = True
            used.setdefault(fid, set()).add(best_idx)
    return tp, total_gt


def _ap_from_flags(tp: np.ndarray, total_gt: int) -> tuple[float, PrCurve]:
    if total_gt == 0:
        if len(tp):
            warnings.warn("predictions scored against empty ground truth; AP defined as 0")
        return 0.0, PrCurve(np.zeros(0), np.zeros(0))
    if len(tp) == 0:
        return 0.0, PrCurve(np.zeros(0), np.zeros(0))
    cum_tp = np.cumsum(tp)
    ranks = np.arange(1, len(tp) + 1)
    recall = cum_tp / total_gt
    precision = cum_tp / ranks
    return _interpolated_ap(recall, precision), PrCurve(recall, precision)


def evaluate_map(
    predictions: dict[int, list[Detection]],
    ground_truth: dict[int, list[AnnotationRecord]],
    cfg: EvalConfig | None = None,
) -> tuple[float, PrCurve]:
    """Detection AP at the configured IoU threshold, plus the PR curve."""
    cfg = cfg or EvalConfig()
    tp, total_gt = _match_predictions(predictions, ground_truth, cfg.iou_threshold)
    return _ap_from_flags(tp, total_gt)


def _per_class_ap(
    predictions: dict[int, list[Detection]],
    ground_truth: dict[int, list[AnnotationRecord]],
    iou_threshold: float,
    gt_label,
    det_label,
    classes: list[int],
) -> float:
    """Macro-average AP over classes that appear in the ground truth."""
    aps = []
    for cls in classes:
        tp, total_gt = _match_predictions(
            predictions,
            ground_truth,
            iou_threshold,
            gt_label=gt_label,
            det_label=det_label,
            wanted_label=cls,
        )
        if total_gt == 0:
            continue
        ap, _ = _ap_from_flags(tp, total_gt)
        aps.append(ap)
    return float(np.mean(aps)) if aps else 0.0


def action_map(
    predictions: dict[int, list[Detection]],
    ground_truth: dict[int, list[AnnotationRecord]],
    cfg: EvalConfig | None = None,
) -> tuple[float, float]:
    """Per-action AP for the two vocabularies.

    A prediction is a true positive for class c only when its argmax action
    is c, the matched ground truth carries label c, and the boxes overlap at
    the IoU threshold. Classes absent from the ground truth are skipped in
    the macro average.
    """
    cfg = cfg or EvalConfig()
    primary_classes = sorted(
        {r.primary_action for rows in ground_truth.values() for r in rows}
        | {d.primary_action for dets in predictions.values() for d in dets}
    )
    secondary_classes = sorted(
        {r.secondary_action for rows in ground_truth.values() for r in rows}
        | {d.secondary_action for dets in predictions.values() for d in dets}
    )
    primary_ap = _per_class_ap(
        predictions,
        ground_truth,
        cfg.iou_threshold,
        gt_label=lambda r: r.primary_action,
        det_label=lambda d: d.primary_action,
        classes=primary_classes,
    )
    secondary_ap = _per_class_ap(
        predictions,
        ground_truth,
        cfg.iou_threshold,
        gt_label=lambda r: r.secondary_action,
        det_label=lambda d: d.secondary_action,
        classes=secondary_classes,
    )
    return primary_ap, secondary_ap


def detections_to_records(detections: list[Detection]) -> list[AnnotationRecord]:
    return [
        AnnotationRecord(
            frame_id=d.frame_id,
            box=d.box,
            track_id=d.track_id,
            primary_action=d.primary_action if d.primary_dist.size > 1 else -1,
            secondary_action=d.secondary_action if d.secondary_dist.size > 1 else -1,
            confidence=d.confidence,
        )
        for d in detections
    ]


def records_to_detections(records: list[AnnotationRecord]) -> list[Detection]:
    out = []
    for r in records:
        det = Detection(
            box=r.box,
            confidence=r.confidence,
            track_id=r.track_id,
            frame_id=r.frame_id,
        )
        if r.primary_action >= 0:
            det.primary_dist = np.eye(max(r.primary_action + 1, 2))[r.primary_action]
        if r.secondary_action >= 0:
            det.secondary_dist = np.eye(max(r.secondary_action + 1, 2))[r.secondary_action]
        out.append(det)
    return out
