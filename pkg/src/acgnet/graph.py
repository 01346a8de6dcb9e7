"""Segment graph construction.

A video is a ``(T, D)`` matrix of segment features. The graph over its
segments combines cosine similarity with a temporal diffusion term that
favours distant segments, then keeps only a few strong edges per node:

    similarity   A_s[i, j] = f_i . f_j / (|f_i| |f_j|)
    temporal     A_t[i, j] = 1 - max(Z - |i - j|, 0) / Z
    combined     A = (A_s + alpha * A_t) / 2
    sparse       A'[i, j] = A[i, j] if rank_i(j) <= K and A[i, j] > lam else 0
    normalized   A_hat = A' / rowsum(A')

All matrices are plain float64 ``numpy`` arrays.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels

GRAPH_VARIANTS = ("similarity", "difference", "combined", "temporal")


class InvalidInputError(ValueError):
    """Raised when array shapes or values violate an operation's contract."""


def default_k(num_segments: int) -> int:
    """Neighbour budget used when ``K`` is not set explicitly."""
    if num_segments == 750:
        return 50
    return max(1, num_segments // 10)


@dataclass(frozen=True)
class AcgHyperparams:
    z: int = 10
    alpha: float = 1.0
    lam: float = 0.85
    k: Optional[int] = None

    def __post_init__(self):
        if self.z < 1:
            raise InvalidInputError(f"Z must be >= 1, got {self.z}")
        if self.alpha < 0:
            raise InvalidInputError(f"alpha must be >= 0, got {self.alpha}")
        if not 0 <= self.lam < 1:
            raise InvalidInputError(f"lambda must lie in [0, 1), got {self.lam}")
        if self.k is not None and self.k < 1:
            raise InvalidInputError(f"K must be >= 1, got {self.k}")

    def resolve_k(self, num_segments: int) -> int:
        k = default_k(num_segments) if self.k is None else self.k
        return min(k, num_segments)


def as_features(features) -> np.ndarray:
    """Validate and return a float64 ``(T, D)`` feature matrix."""
    arr = np.asarray(features, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInputError(f"expected a non-empty (T, D) matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("feature matrix contains non-finite entries")
    return arr


def build_similarity_graph(features) -> np.ndarray:
    """Pairwise cosine similarity; rows of zero-magnitude features are 0."""
    f = as_features(features)
    # pre-scale by the row maximum so huge magnitudes do not overflow the norm
    peak = np.abs(f).max(axis=1, initial=0.0)
    nonzero = peak > 0
    f = f.copy()
    f[nonzero] /= peak[nonzero, None]
    norms = np.linalg.norm(f, axis=1)
    unit = np.zeros_like(f)
    unit[nonzero] = f[nonzero] / norms[nonzero, None]
    sim = unit @ unit.T
    sim = 0.5 * (sim + sim.T)
    np.clip(sim, -1.0, 1.0, out=sim)
    idx = np.flatnonzero(nonzero)
    sim[idx, idx] = 1.0
    return sim


def build_temporal_graph(num_segments: int, z: int) -> np.ndarray:
    if num_segments < 1 or z < 1:
        raise InvalidInputError("num_segments and Z must both be >= 1")
    pos = np.arange(num_segments)
    dist = np.abs(pos[:, None] - pos[None, :])
    return 1.0 - np.maximum(z - dist, 0) / z


def combine_graphs(sim, temp, alpha: float) -> np.ndarray:
    sim = np.asarray(sim, dtype=np.float64)
    temp = np.asarray(temp, dtype=np.float64)
    if sim.shape != temp.shape:
        raise InvalidInputError(f"graph shapes differ: {sim.shape} vs {temp.shape}")
    return (sim + alpha * temp) / 2.0


def difference_graph(sim, temp, alpha: float) -> np.ndarray:
    """Similarity minus temporal diffusion, clamped at zero, scaled like ``combine_graphs``."""
    sim = np.asarray(sim, dtype=np.float64)
    temp = np.asarray(temp, dtype=np.float64)
    if sim.shape != temp.shape:
        raise InvalidInputError(f"graph shapes differ: {sim.shape} vs {temp.shape}")
    return np.maximum(sim - alpha * temp, 0.0) / 2.0


def sparsify(combined, lam: float, k: int) -> np.ndarray:
    """Row-wise top-``k`` and strict threshold ``lam`` pruning.

    Ties in rank go to the lower column index. The result is generally not
    symmetric.
    """
    if k < 1:
        raise InvalidInputError(f"K must be >= 1, got {k}")
    combined = np.asarray(combined, dtype=np.float64)
    if combined.ndim != 2:
        raise InvalidInputError(f"expected a 2-D adjacency, got shape {combined.shape}")
    return kernels.sparsify_rows(combined, float(lam), int(k))


def row_normalize(sparse) -> np.ndarray:
    """Normalize rows to sum to one; all-zero rows become unit self-loops."""
    a = np.asarray(sparse, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"expected a square adjacency, got shape {a.shape}")
    if np.any(a < 0):
        raise InvalidInputError("row normalization needs non-negative weights")
    sums = a.sum(axis=1)
    out = np.zeros_like(a)
    live = sums > 0
    out[live] = a[live] / sums[live, None]
    dead = np.flatnonzero(~live)
    out[dead, dead] = 1.0
    return out


def build_graph(features, hp: AcgHyperparams = AcgHyperparams(), variant: str = "combined"):
    """Run the whole construction chain and return ``(A', A_hat)``.

    ``variant`` selects the dense graph fed to sparsification: ``combined``
    (similarity plus temporal), ``similarity`` only, ``difference``
    (similarity minus temporal, clamped) or ``temporal`` only.
    """
    f = as_features(features)
    num_segments = f.shape[0]
    temp = build_temporal_graph(num_segments, hp.z)
    if variant == "temporal":
        dense = temp
    else:
        sim = build_similarity_graph(f)
        if variant == "combined":
            dense = combine_graphs(sim, temp, hp.alpha)
        elif variant == "similarity":
            dense = sim
        elif variant == "difference":
            dense = difference_graph(sim, temp, hp.alpha)
        else:
            raise InvalidInputError(f"unknown graph variant {variant!r}; expected one of {GRAPH_VARIANTS}")
    sparse = sparsify(dense, hp.lam, hp.resolve_k(num_segments))
    return sparse, row_normalize(sparse)
