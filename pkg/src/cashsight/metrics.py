"""Detection evaluation: greedy matching, precision/recall/F1/accuracy,
per-class average precision with all-point interpolation, mAP over IoU
thresholds, and the background-augmented confusion matrix.

Conventions:

* Matching is greedy by descending confidence; a prediction takes the
  unmatched same-class ground truth of highest IoU >= threshold.
* AP uses the precision envelope (max precision at recall >= r) integrated
  over all recall change points.
* The confusion matrix rematches class-agnostically so that a box that
  spatially hits a ground truth of another class lands off-diagonal;
  class-aware matching alone could never populate those cells.  Row = true
  class, column = predicted class, index 30 = background (missed/spurious).
* Zero denominators yield 0 for precision/recall/F1/accuracy; a class with
  no ground truth and no predictions has undefined AP and is excluded from
  the mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .head import Detection, iou

NUM_CLASSES = 30
MAP_COARSE = (0.5,)
MAP_FULL = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))  # 0.50..0.95


@dataclass
class MatchResult:
    """Per-image matching outcome at one IoU threshold."""

    tp: list[tuple[int, int]] = field(default_factory=list)  # (pred idx, gt idx)
    fp: list[int] = field(default_factory=list)  # unmatched pred idx
    fn: list[int] = field(default_factory=list)  # unmatched gt idx


def _pred_order(preds: list[Detection]):
    return sorted(range(len(preds)), key=lambda i: (-preds[i].confidence, preds[i].box[0], preds[i].box[1]))


def match(preds: list[Detection], gts, iou_threshold: float = 0.5, class_aware: bool = True) -> MatchResult:
    """Greedy one-to-one matching of predictions to ground-truth boxes.

    ``gts`` is a list of ((x1, y1, x2, y2), class_id).
    """
    result = MatchResult()
    taken = [False] * len(gts)
    for pi in _pred_order(preds):
        pred = preds[pi]
        best_gi, best_iou = -1, 0.0
        for gi, (gbox, gcls) in enumerate(gts):
            if taken[gi]:
                continue
            if class_aware and gcls != pred.class_id:
                continue
            val = iou(pred.box, gbox)
            if val >= iou_threshold and val > best_iou:
                best_gi, best_iou = gi, val
        if best_gi >= 0:
            taken[best_gi] = True
            result.tp.append((pi, best_gi))
        else:
            result.fp.append(pi)
    result.fn = [gi for gi, t in enumerate(taken) if not t]
    return result


@dataclass(frozen=True)
class Scores:
    precision: float
    recall: float
    f1: float
    accuracy: float


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall (0 when both are 0)."""
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def precision_recall_f1_accuracy(tp: int, fp: int, fn: int, tn: int = 0) -> Scores:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    total = tp + tn + fp + fn
    accuracy = (tp + tn) / total if total else 0.0
    return Scores(precision, recall, f1_score(precision, recall), accuracy)


@dataclass(frozen=True)
class PRCurve:
    """Cumulative (recall, precision) points in confidence order plus AP."""

    recall: tuple[float, ...]
    precision: tuple[float, ...]
    ap: float


def average_precision(scored, gt_count: int) -> PRCurve:
    """All-point interpolated AP from (confidence, is_tp) pairs.

    Returns AP = nan when there is nothing to score (no ground truth and no
    predictions); the caller excludes those classes from mAP.
    """
    if gt_count == 0 and not scored:
        return PRCurve((), (), float("nan"))
    ordered = sorted(scored, key=lambda t: -t[0])
    tp_cum = 0
    recalls, precisions = [], []
    for rank, (_, is_tp) in enumerate(ordered, start=1):
        tp_cum += bool(is_tp)
        recalls.append(tp_cum / gt_count if gt_count else 0.0)
        precisions.append(tp_cum / rank)
    if not ordered or gt_count == 0:
        return PRCurve(tuple(recalls), tuple(precisions), 0.0)

    # integrate the precision envelope at recall change points, scanning
    # backwards with a running max
    ap = 0.0
    best = 0.0
    prev_recall = None
    for r, p in zip(reversed(recalls), reversed(precisions)):
        if prev_recall is not None and r < prev_recall:
            ap += (prev_recall - r) * best
        best = max(best, p)
        prev_recall = r
    ap += prev_recall * best if prev_recall else 0.0
    return PRCurve(tuple(recalls), tuple(precisions), ap)


def per_class_scored(preds_by_image: dict, gts_by_image: dict, iou_threshold: float, num_classes: int):
    """(scored lists, gt counts) per class from class-aware matching."""
    scored = [[] for _ in range(num_classes)]
    gt_counts = [0] * num_classes
    for image_id, gts in gts_by_image.items():
        for _, gcls in gts:
            gt_counts[gcls] += 1
    for image_id, preds in preds_by_image.items():
        gts = gts_by_image.get(image_id, [])
        res = match(preds, gts, iou_threshold=iou_threshold)
        tp_preds = {pi for pi, _ in res.tp}
        for pi, p in enumerate(preds):
            scored[p.class_id].append((p.confidence, pi in tp_preds))
    return scored, gt_counts


def map_at(preds_by_image: dict, gts_by_image: dict, thresholds, num_classes: int = NUM_CLASSES) -> float:
    """Mean AP over classes, averaged over the given IoU thresholds."""
    per_threshold = []
    for thr in thresholds:
        scored, gt_counts = per_class_scored(preds_by_image, gts_by_image, thr, num_classes)
        aps = []
        for c in range(num_classes):
            curve = average_precision(scored[c], gt_counts[c])
            if not np.isnan(curve.ap):
                aps.append(curve.ap)
        per_threshold.append(float(np.mean(aps)) if aps else 0.0)
    return float(np.mean(per_threshold))


def confusion_matrix(preds_by_image: dict, gts_by_image: dict, iou_threshold: float = 0.5, num_classes: int = NUM_CLASSES) -> np.ndarray:
    """(N+1)x(N+1) counts with class-agnostic spatial rematching."""
    cm = np.zeros((num_classes + 1, num_classes + 1), dtype=np.int64)
    for image_id in set(preds_by_image) | set(gts_by_image):
        preds = preds_by_image.get(image_id, [])
        gts = gts_by_image.get(image_id, [])
        res = match(preds, gts, iou_threshold=iou_threshold, class_aware=False)
        for pi, gi in res.tp:
            cm[gts[gi][1], preds[pi].class_id] += 1
        for gi in res.fn:
            cm[gts[gi][1], num_classes] += 1
        for pi in res.fp:
            cm[num_classes, preds[pi].class_id] += 1
    return cm


def accuracy_from_trace(cm: np.ndarray) -> float:
    """Trace over total; the detection analogue of (TP+TN)/all."""
    total = int(cm.sum())
    return float(np.trace(cm)) / total if total else 0.0


def evaluation_report(preds_by_image: dict, gts_by_image: dict, num_classes: int = NUM_CLASSES, class_names=None) -> dict:
    """Aggregate everything the eval CLI emits as JSON."""
    tp = fp = fn = 0
    for image_id in set(preds_by_image) | set(gts_by_image):
        res = match(preds_by_image.get(image_id, []), gts_by_image.get(image_id, []), iou_threshold=0.5)
        tp += len(res.tp)
        fp += len(res.fp)
        fn += len(res.fn)
    scores = precision_recall_f1_accuracy(tp, fp, fn, tn=0)
    cm = confusion_matrix(preds_by_image, gts_by_image, iou_threshold=0.5, num_classes=num_classes)
    map50 = map_at(preds_by_image, gts_by_image, MAP_COARSE, num_classes)
    map_full = map_at(preds_by_image, gts_by_image, MAP_FULL, num_classes)

    scored, gt_counts = per_class_scored(preds_by_image, gts_by_image, 0.5, num_classes)
    per_class = {}
    for c in range(num_classes):
        curve = average_precision(scored[c], gt_counts[c])
        name = class_names[c] if class_names else str(c)
        per_class[name] = None if np.isnan(curve.ap) else round(curve.ap, 6)

    return {
        "counts": {"tp": tp, "fp": fp, "fn": fn},
        "accuracy": accuracy_from_trace(cm),
        "precision": scores.precision,
        "recall": scores.recall,
        "f1": scores.f1,
        "map50": map50,
        "map50_95": map_full,
        "mAP50(B)": map50,
        "mAP50-95(B)": map_full,
        "per_class_ap": per_class,
        "confusion_matrix": cm.tolist(),
    }


def pr_curve_csv(curve: PRCurve, class_name: str) -> str:
    """CSV body for one class's PR curve, AP50 noted in the header."""
    lines = [f"# class={class_name} AP50={curve.ap:.3f}" if not np.isnan(curve.ap) else f"# class={class_name} AP50=nan"]
    lines.append("recall,precision")
    for r, p in zip(curve.recall, curve.precision):
        lines.append(f"{r:.6f},{p:.6f}")
    return "\n".join(lines) + "\n"
