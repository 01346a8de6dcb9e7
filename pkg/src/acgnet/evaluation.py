"""Temporal IoU, average precision and mAP over IoU thresholds.

Intervals are inclusive segment indices, treated as half-open
``[start, end + 1)`` when measuring overlap. AP is the non-interpolated
sum of precision at each true-positive rank divided by the number of
ground-truth instances.
"""

import csv
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence

import numpy as np

from . import kernels
from .graph import InvalidInputError
from .head import Proposal

DEFAULT_IOU_THRESHOLDS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7)


@dataclass(frozen=True)
class GroundTruthInstance:
    video_id: str
    class_id: int
    start_seg: int
    end_seg: int

    def __post_init__(self):
        if self.start_seg > self.end_seg:
            raise InvalidInputError(f"instance start {self.start_seg} > end {self.end_seg}")


def temporal_iou(a, b) -> float:
    a0, a1 = a[0], a[1] + 1
    b0, b1 = b[0], b[1] + 1
    inter = max(0, min(a1, b1) - max(a0, b0))
    union = (a1 - a0) + (b1 - b0) - inter
    return inter / union if union > 0 else 0.0


def rank_proposals(proposals: Iterable[Proposal]) -> List[Proposal]:
    return sorted(proposals, key=lambda p: (-p.score, p.start_seg, p.video_id))


def _iou_matrix(props: Sequence[Proposal], gts: Sequence[GroundTruthInstance]) -> np.ndarray:
    m = np.full((len(props), len(gts)), -1.0)
    for i, p in enumerate(props):
        for j, g in enumerate(gts):
            if p.video_id == g.video_id:
                m[i, j] = temporal_iou((p.start_seg, p.end_seg), (g.start_seg, g.end_seg))
    return m


def match_proposals(proposals, gts, iou_threshold: float):
    """Greedy matching in rank order; returns ``(ranked, tp_flags, match)``."""
    ranked = rank_proposals(proposals)
    gts = list(gts)
    tp, match = kernels.greedy_match(_iou_matrix(ranked, gts), float(iou_threshold))
    matched = match[match >= 0]
    assert len(np.unique(matched)) == len(matched), "a ground-truth instance was matched twice"
    return ranked, tp, match


def average_precision(proposals, gts, iou_threshold: float) -> float:
    """AP for one class. Raises if there are no ground-truth instances."""
    gts = list(gts)
    if not gts:
        raise InvalidInputError("average precision is undefined without ground truth")
    _, tp, _ = match_proposals(proposals, gts, iou_threshold)
    if tp.size == 0:
        return 0.0
    hits = np.cumsum(tp)
    ranks = np.arange(1, tp.size + 1)
    return float(np.sum((hits / ranks)[tp.astype(bool)]) / len(gts))


def mean_ap(proposals, gts, iou_thresholds=DEFAULT_IOU_THRESHOLDS) -> Dict:
    """Per-threshold mAP over classes that have ground truth.

    Returns ``{"per_class": {thr: {class: ap}}, "map": {thr: mAP}, "average": float}``.
    """
    gts = list(gts)
    if not gts:
        raise InvalidInputError("mean_ap needs at least one ground-truth instance")
    gts_by_class = defaultdict(list)
    for g in gts:
        gts_by_class[g.class_id].append(g)
    props_by_class = defaultdict(list)
    for p in proposals:
        props_by_class[p.class_id].append(p)
    classes = sorted(gts_by_class)
    per_class, maps = {}, {}
    for thr in iou_thresholds:
        aps = {c: average_precision(props_by_class[c], gts_by_class[c], thr) for c in classes}
        per_class[thr] = aps
        maps[thr] = float(np.mean(list(aps.values())))
    return {"per_class": per_class, "map": maps,
            "average": float(np.mean(list(maps.values())))}


def write_map_csv(path, result: Dict) -> None:
    """``iou_threshold,class_id,ap`` rows; ``*`` marks the class mean."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iou_threshold", "class_id", "ap"])
        for thr, aps in result["per_class"].items():
            for c, ap in aps.items():
                w.writerow([f"{thr:.2f}", c, f"{ap:.6f}"])
            w.writerow([f"{thr:.2f}", "*", f"{result['map'][thr]:.6f}"])
        w.writerow(["average", "*", f"{result['average']:.6f}"])
