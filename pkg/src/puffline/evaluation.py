"""Event-level and window-level scoring of puff and session detections."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence

import numpy as np

PUFF_WEIGHT = 7.27
SESSION_WEIGHT = 13.76


@dataclass
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int | None = None

    def __add__(self, other: "Confusion") -> "Confusion":
        tn = None if self.tn is None or other.tn is None else self.tn + other.tn
        return Confusion(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, tn)

    def as_dict(self) -> dict:
        return asdict(self)


def sum_confusions(items: Sequence[Confusion]) -> Confusion:
    items = list(items)
    if not items:
        return Confusion()
    total = items[0]
    for c in items[1:]:
        total = total + c
    return total


def as_intervals(intervals) -> np.ndarray:
    arr = np.asarray(list(intervals), dtype=np.float64).reshape(-1, 2)
    if np.any(arr[:, 0] > arr[:, 1]):
        raise ValueError("interval start after end")
    if arr.shape[0] > 1 and np.any(arr[1:, 0] < arr[:-1, 1]):
        raise ValueError("intervals must be sorted and non-overlapping")
    return arr


def match_points(points, gt) -> Confusion:
    """Strict matching of time points to intervals (boundaries inclusive).

    Points are taken in time order. The first point inside an interval is a
    true positive, later ones in the same interval and points outside all
    intervals are false positives, and intervals left without a point are
    false negatives. A point on a shared boundary belongs to the earlier
    interval.
    """
    gt = as_intervals(gt)
    pts = np.sort(np.asarray(points, dtype=np.float64).ravel())
    hit = np.zeros(gt.shape[0], dtype=bool)
    tp = fp = 0
    if gt.shape[0]:
        k = np.searchsorted(gt[:, 1], pts, side="left")
        for p, j in zip(pts, k):
            if j < gt.shape[0] and gt[j, 0] <= p and not hit[j]:
                hit[j] = True
                tp += 1
            else:
                fp += 1
    else:
        fp = pts.size
    return Confusion(tp=tp, fp=fp, fn=int((~hit).sum()))


def evaluate_puffs(detections, gt) -> Confusion:
    """Strict puff scoring: one true positive per ground-truth puff interval."""
    return match_points(getattr(detections, "timestamps", detections), gt)


def evaluate_sessions(pred, gt) -> Confusion:
    """A predicted session counts when its midpoint falls inside a true session."""
    pred = as_intervals(getattr(pred, "intervals", pred))
    return match_points((pred[:, 0] + pred[:, 1]) / 2, gt)


def window_confusion(pred_labels, gt_labels) -> Confusion:
    """Plain 2x2 counts over +1/-1 window labels, +1 being the positive class."""
    pred = np.asarray(pred_labels) > 0
    gt = np.asarray(gt_labels) > 0
    if pred.shape != gt.shape:
        raise ValueError(f"label vectors differ in length: {pred.shape} vs {gt.shape}")
    return Confusion(
        tp=int(np.sum(pred & gt)),
        fp=int(np.sum(pred & ~gt)),
        fn=int(np.sum(~pred & gt)),
        tn=int(np.sum(~pred & ~gt)),
    )


def weighted_accuracy(c: Confusion, w: float) -> float:
    """(TP*w + TN) / ((TP + FN)*w + FP + TN)."""
    if c.tn is None:
        raise ValueError("weighted accuracy needs true negatives")
    den = (c.tp + c.fn) * w + c.fp + c.tn
    if den <= 0:
        raise ValueError("weighted accuracy undefined for an empty confusion")
    return (c.tp * w + c.tn) / den


class PRF(NamedTuple):
    precision: float
    recall: float
    f1: float
    degenerate: bool


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def prf(c: Confusion) -> PRF:
    """Precision, recall and F1; undefined ratios are reported as 0 and flagged."""
    degenerate = False
    if c.tp + c.fp > 0:
        precision = c.tp / (c.tp + c.fp)
    else:
        precision, degenerate = 0.0, True
    if c.tp + c.fn > 0:
        recall = c.tp / (c.tp + c.fn)
    else:
        recall, degenerate = 0.0, True
    return PRF(precision, recall, f1_score(precision, recall), degenerate)


def merge_intervals(intervals) -> np.ndarray:
    arr = np.asarray(list(intervals), dtype=np.float64).reshape(-1, 2)
    if arr.shape[0] == 0:
        return arr
    arr = arr[np.argsort(arr[:, 0], kind="stable")]
    merged = [arr[0].copy()]
    for s, e in arr[1:]:
        if s <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append(np.array([s, e]))
    return np.array(merged)


def interval_measures(pred, gt) -> tuple[float, float]:
    """Total length of the intersection and of the union of two interval sets."""
    a = merge_intervals(getattr(pred, "intervals", pred))
    b = merge_intervals(getattr(gt, "intervals", gt))
    inter = 0.0
    i = j = 0
    while i < len(a) and j < len(b):
        lo = max(a[i, 0], b[j, 0])
        hi = min(a[i, 1], b[j, 1])
        if hi > lo:
            inter += hi - lo
        if a[i, 1] < b[j, 1]:
            i += 1
        else:
            j += 1
    total = float(np.sum(a[:, 1] - a[:, 0]) + np.sum(b[:, 1] - b[:, 0]))
    return inter, total - inter


def jaccard(pred, gt) -> float:
    """|A ∩ B| / |A ∪ B| for the unions of two interval sets, measured in seconds.

    Two empty sets score 1.0.
    """
    a = merge_intervals(getattr(pred, "intervals", pred))
    b = merge_intervals(getattr(gt, "intervals", gt))
    inter, union = interval_measures(a, b)
    if union == 0:
        return 1.0 if a.shape == b.shape and np.array_equal(a, b) else 0.0
    return inter / union


def interval_labels(times, intervals) -> np.ndarray:
    """+1 for each time inside one of the (inclusive) intervals, else -1."""
    t = np.asarray(times, dtype=np.float64)
    iv = merge_intervals(getattr(intervals, "intervals", intervals))
    out = -np.ones(t.shape, dtype=np.int8)
    if iv.shape[0]:
        k = np.searchsorted(iv[:, 1], t, side="left")
        inside = k < iv.shape[0]
        kk = np.minimum(k, iv.shape[0] - 1)
        out[inside & (iv[kk, 0] <= t)] = 1
    return out


def metrics_dict(c: Confusion, w: float | None = None, **extra) -> dict:
    p = prf(c)
    out = {"tp": c.tp, "fp": c.fp, "fn": c.fn, "tn": c.tn,
           "precision": p.precision, "recall": p.recall, "f1": p.f1,
           "weighted_accuracy": None, "jaccard": None}
    if w is not None and c.tn is not None and (c.tp + c.fn) * w + c.fp + c.tn > 0:
        out["weighted_accuracy"] = weighted_accuracy(c, w)
    out.update(extra)
    return out
