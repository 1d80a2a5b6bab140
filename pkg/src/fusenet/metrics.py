"""Detection evaluation: IoU, per-class average precision (area under the
precision-recall curve, all-point interpolation), and mAP summaries at
IoU 0.5 and over the 0.50:0.05:0.95 ladder.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

IOU_LADDER = tuple(np.round(np.arange(0.50, 0.96, 0.05), 2))
DEFAULT_CONF_THRESHOLD = 0.25


class EvaluationError(ValueError):
    """The evaluation request is ill-posed (e.g. no ground truth classes)."""


@dataclass
class MetricsReport:
    per_class_ap50: dict
    map50: float
    map50_90: float
    precision: float
    recall: float
    conf_threshold: float = DEFAULT_CONF_THRESHOLD
    param_count: int = 0
    flop_count: int = 0
    per_class_ap_ladder: dict = field(default_factory=dict)


def box_corners(b):
    """(cx, cy, w, h) -> (x0, y0, x1, y1)."""
    return (b.cx - b.w / 2, b.cy - b.h / 2, b.cx + b.w / 2, b.cy + b.h / 2)


def iou(a, b):
    ax0, ay0, ax1, ay1 = box_corners(a)
    bx0, by0, bx1, by1 = box_corners(b)
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union


def _match_flags(dets, truths, iou_threshold):
    """Greedy score-descending matching within one class.

    dets: [(image_id, Detection)], truths: [(image_id, GroundTruthBox)].
    Returns the TP/FP flag per detection in score-descending order, and
    the total truth count.
    """
    order = sorted(range(len(dets)), key=lambda i: (-dets[i][1].score, i))
    truths_by_image = {}
    for j, (img_id, t) in enumerate(truths):
        truths_by_image.setdefault(img_id, []).append((j, t))
    matched = set()
    flags = []
    for i in order:
        img_id, d = dets[i]
        best_iou, best_j = 0.0, None
        for j, t in truths_by_image.get(img_id, ()):
            if j in matched:
                continue
            v = iou(d, t)
            if v > best_iou:
                best_iou, best_j = v, j
        if best_j is not None and best_iou >= iou_threshold:
            matched.add(best_j)
            flags.append(True)
        else:
            flags.append(False)
    return flags, len(truths)


def average_precision(dets, truths, iou_threshold=0.5, image_ids=None,
                      truth_image_ids=None):
    """AP of a single class: area under the precision envelope over recall.

    ``dets``/``truths`` may come from multiple images; pass parallel
    image-id lists to scope the matching (default: one image).
    """
    if image_ids is None:
        image_ids = [0] * len(dets)
    if truth_image_ids is None:
        truth_image_ids = [0] * len(truths)
    if not truths:
        return 0.0
    flags, n_truth = _match_flags(list(zip(image_ids, dets)),
                                  list(zip(truth_image_ids, truths)),
                                  iou_threshold)
    if not flags:
        return 0.0
    tp = np.cumsum(flags)
    fp = np.cumsum([not f for f in flags])
    recall = tp / n_truth
    precision = tp / (tp + fp)
    # precision envelope: best precision achievable at recall >= r
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    r_prev = 0.0
    ap = 0.0
    for r, p in zip(recall, envelope):
        ap += (r - r_prev) * p
        r_prev = r
    return float(ap)


def precision_recall(dets_by_image, truths_by_image, iou_threshold=0.5,
                     conf_threshold=DEFAULT_CONF_THRESHOLD):
    """Micro-averaged P/R over all classes at one operating threshold."""
    tp = fp = n_truth = 0
    classes = _truth_classes(truths_by_image)
    for cid in classes:
        dets, img_ids = _class_dets(dets_by_image, cid, conf_threshold)
        truths, truth_ids = _class_truths(truths_by_image, cid)
        flags, nt = _match_flags(list(zip(img_ids, dets)),
                                 list(zip(truth_ids, truths)), iou_threshold)
        tp += sum(flags)
        fp += len(flags) - sum(flags)
        n_truth += nt
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / n_truth if n_truth else 0.0
    return precision, recall


def _truth_classes(truths_by_image):
    return sorted({t.class_id for ts in truths_by_image for t in ts})


def _class_dets(dets_by_image, cid, conf_threshold=0.0):
    dets, img_ids = [], []
    for img_id, ds in enumerate(dets_by_image):
        for d in ds:
            if d.class_id == cid and d.score >= conf_threshold:
                dets.append(d)
                img_ids.append(img_id)
    return dets, img_ids


def _class_truths(truths_by_image, cid):
    truths, img_ids = [], []
    for img_id, ts in enumerate(truths_by_image):
        for t in ts:
            if t.class_id == cid:
                truths.append(t)
                img_ids.append(img_id)
    return truths, img_ids


def mean_ap(dets_by_image, truths_by_image, iou_thresholds=IOU_LADDER,
            conf_threshold=DEFAULT_CONF_THRESHOLD):
    """Dataset-level evaluation; classes absent from the truths are
    excluded from the mean."""
    classes = _truth_classes(truths_by_image)
    if not classes:
        raise EvaluationError("no ground-truth classes to evaluate")
    ladder = {}
    ap50 = {}
    for cid in classes:
        dets, img_ids = _class_dets(dets_by_image, cid)
        truths, truth_ids = _class_truths(truths_by_image, cid)
        aps = [average_precision(dets, truths, thr, img_ids, truth_ids)
               for thr in iou_thresholds]
        ladder[cid] = aps
        ap50[cid] = average_precision(dets, truths, 0.5, img_ids, truth_ids)
    map50 = float(np.mean([ap50[c] for c in classes]))
    map50_90 = float(np.mean([np.mean(ladder[c]) for c in classes]))
    precision, recall = precision_recall(dets_by_image, truths_by_image,
                                         conf_threshold=conf_threshold)
    return MetricsReport(per_class_ap50=ap50, map50=map50, map50_90=map50_90,
                         precision=precision, recall=recall,
                         conf_threshold=conf_threshold,
                         per_class_ap_ladder=ladder)
