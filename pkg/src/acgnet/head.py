"""Minimal weakly supervised localization head.

Segments are scored by a linear classifier with a per-class sigmoid (the
class activation sequence, CAS). A video's class score is the mean of its
``pool_k`` highest segment scores, trained with binary cross-entropy
against the video-level labels. Proposals are runs of above-threshold
segments scored by inner-minus-flank contrast.
"""

import math
from dataclasses import dataclass
from typing import Iterable, List

import numpy as np

from .graph import InvalidInputError

SCORE_EPS = 1e-7


def default_pool_k(num_segments: int) -> int:
    return max(1, num_segments // 8)


@dataclass
class HeadParams:
    classifier: np.ndarray
    bias: np.ndarray
    pool_k: int

    def __post_init__(self):
        self.classifier = np.asarray(self.classifier, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.classifier.ndim != 2 or self.bias.shape != (self.classifier.shape[1],):
            raise InvalidInputError(
                f"classifier {self.classifier.shape} and bias {self.bias.shape} are inconsistent")
        if self.pool_k < 1:
            raise InvalidInputError(f"pool_k must be >= 1, got {self.pool_k}")

    @property
    def num_classes(self) -> int:
        return self.classifier.shape[1]

    def copy(self) -> "HeadParams":
        return HeadParams(self.classifier.copy(), self.bias.copy(), self.pool_k)


def init_head(in_dim: int, num_classes: int, pool_k: int, rng=None) -> HeadParams:
    rng = np.random.default_rng(rng)
    scale = np.sqrt(6.0 / (in_dim + num_classes))
    return HeadParams(rng.uniform(-scale, scale, size=(in_dim, num_classes)),
                      np.zeros(num_classes), pool_k)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def compute_cas(features, params: HeadParams) -> np.ndarray:
    f = np.asarray(features, dtype=np.float64)
    if f.ndim < 2 or f.shape[-1] != params.classifier.shape[0]:
        raise InvalidInputError(
            f"features of width {f.shape[-1]} do not match a classifier with "
            f"{params.classifier.shape[0]} input rows")
    return sigmoid(f @ params.classifier + params.bias)


def _top_indices(cas: np.ndarray, pool_k: int) -> np.ndarray:
    k = min(pool_k, cas.shape[-2])
    # stable descending order: earlier segments win ties
    return np.argsort(-cas, axis=-2, kind="stable")[..., :k, :]


def video_scores(cas, pool_k: int) -> np.ndarray:
    cas = np.asarray(cas, dtype=np.float64)
    top = _top_indices(cas, pool_k)
    return np.take_along_axis(cas, top, axis=-2).mean(axis=-2)


def label_vector(labels: Iterable[int], num_classes: int) -> np.ndarray:
    y = np.zeros(num_classes)
    for c in labels:
        if not 0 <= c < num_classes:
            raise InvalidInputError(f"label {c} outside [0, {num_classes})")
        y[c] = 1.0
    return y


def _bce(s, y):
    s = np.clip(s, SCORE_EPS, 1.0 - SCORE_EPS)
    return -(y * np.log(s) + (1.0 - y) * np.log(1.0 - s))


def mil_loss(scores, labels: Iterable[int]) -> float:
    s = np.asarray(scores, dtype=np.float64)
    return float(np.sum(_bce(s, label_vector(labels, s.shape[0]))))


def head_loss_and_grad(features, targets, params: HeadParams):
    """MIL loss and its gradients, summed over any leading batch axes.

    ``features`` is ``(T, D)`` with ``targets`` a label list, or
    ``(N, T, D)`` with ``targets`` an ``(N, C)`` 0/1 matrix. Returns
    ``(loss, grad_classifier, grad_bias, grad_features, cas)``.
    """
    f = np.asarray(features, dtype=np.float64)
    if f.ndim == 2:
        y = label_vector(targets, params.num_classes)
    else:
        y = np.asarray(targets, dtype=np.float64)
    cas = compute_cas(f, params)
    top = _top_indices(cas, params.pool_k)
    k = top.shape[-2]
    raw = np.take_along_axis(cas, top, axis=-2).mean(axis=-2)
    loss = float(np.sum(_bce(raw, y)))
    s = np.clip(raw, SCORE_EPS, 1.0 - SCORE_EPS)
    inside = (raw > SCORE_EPS) & (raw < 1.0 - SCORE_EPS)
    d_score = np.where(inside, (s - y) / (s * (1.0 - s)), 0.0)
    d_cas = np.zeros_like(cas)
    np.put_along_axis(d_cas, top, np.broadcast_to(d_score[..., None, :] / k, top.shape), axis=-2)
    d_logit = d_cas * cas * (1.0 - cas)
    d_in = f.shape[-1]
    grad_cls = f.reshape(-1, d_in).T @ d_logit.reshape(-1, params.num_classes)
    grad_bias = d_logit.reshape(-1, params.num_classes).sum(axis=0)
    return loss, grad_cls, grad_bias, d_logit @ params.classifier.T, cas


@dataclass(frozen=True)
class Proposal:
    class_id: int
    start_seg: int
    end_seg: int
    score: float
    video_id: str = ""

    def to_json(self) -> dict:
        return {"video_id": self.video_id, "class_id": self.class_id,
                "start_seg": self.start_seg, "end_seg": self.end_seg, "score": self.score}


def predict_classes(scores, threshold: float = 0.5) -> List[int]:
    return [int(c) for c in np.flatnonzero(np.asarray(scores) > threshold)]


def _runs(mask: np.ndarray):
    """Maximal runs of True as inclusive ``(start, end)`` pairs."""
    padded = np.concatenate([[False], mask, [False]])
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    return [(int(s), int(e) - 1) for s, e in zip(edges[::2], edges[1::2])]


def generate_proposals(cas, predicted_classes, act_threshold: float = 0.5,
                       video_id: str = "") -> List[Proposal]:
    if not 0 < act_threshold < 1:
        raise InvalidInputError(f"act_threshold must lie in (0, 1), got {act_threshold}")
    cas = np.asarray(cas, dtype=np.float64)
    num_segments = cas.shape[0]
    out = []
    for c in predicted_classes:
        col = cas[:, c]
        for start, end in _runs(col > act_threshold):
            length = end - start + 1
            flank = math.ceil(length / 4)
            outer = np.concatenate([col[max(0, start - flank):start],
                                    col[end + 1:min(num_segments, end + 1 + flank)]])
            outer_mean = float(outer.mean()) if outer.size else 0.0
            score = float(col[start:end + 1].mean()) - outer_mean
            out.append(Proposal(int(c), start, end, score, video_id))
    out.sort(key=lambda p: (-p.score, p.start_seg, p.class_id))
    return out
