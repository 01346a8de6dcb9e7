"""Graph inference: neighbour averaging, a ReLU GCN and residual fusion."""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .graph import AcgHyperparams, InvalidInputError, as_features, build_graph


class NumericOverflowError(ArithmeticError):
    """A forward or backward pass produced a non-finite value."""


@dataclass
class GcnParams:
    weights: List[np.ndarray]

    def __post_init__(self):
        if not self.weights:
            raise InvalidInputError("GCN needs at least one layer")
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        for m, w in enumerate(self.weights, 1):
            if w.ndim != 2 or w.shape[0] != w.shape[1]:
                raise InvalidInputError(f"layer {m} weight must be square, got {w.shape}")
            if not np.all(np.isfinite(w)):
                raise InvalidInputError(f"layer {m} weight has non-finite entries")

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.weights[0].shape[0]

    def copy(self) -> "GcnParams":
        return GcnParams([w.copy() for w in self.weights])


def init_gcn(dim: int, num_layers: int = 2, rng=None) -> GcnParams:
    """Glorot-uniform ``dim x dim`` weights for every layer."""
    rng = np.random.default_rng(rng)
    scale = np.sqrt(6.0 / (dim + dim))
    return GcnParams([rng.uniform(-scale, scale, size=(dim, dim)) for _ in range(num_layers)])


@dataclass(frozen=True)
class FusionMode:
    include_original: bool = True
    include_avg: bool = True
    include_gcn: bool = True
    combine: str = "sum"

    def __post_init__(self):
        if not (self.include_original or self.include_avg or self.include_gcn):
            raise InvalidInputError("fusion must include at least one feature stream")
        if self.combine not in ("sum", "concat"):
            raise InvalidInputError(f"combine must be 'sum' or 'concat', got {self.combine!r}")

    @property
    def num_streams(self) -> int:
        return int(self.include_original) + int(self.include_avg) + int(self.include_gcn)

    def output_dim(self, dim: int) -> int:
        return dim * self.num_streams if self.combine == "concat" else dim

    @property
    def label(self) -> str:
        parts = [n for n, on in (("orig", self.include_original), ("avg", self.include_avg),
                                 ("gcn", self.include_gcn)) if on]
        return "+".join(parts) + ("" if self.num_streams == 1 else f":{self.combine}")


def graph_average(features, norm_adj) -> np.ndarray:
    f = np.asarray(features, dtype=np.float64)
    a = np.asarray(norm_adj, dtype=np.float64)
    if a.ndim != f.ndim or a.shape[-2:] != (f.shape[-2], f.shape[-2]):
        raise InvalidInputError(f"adjacency {a.shape} does not match features {f.shape}")
    return a @ f


@dataclass
class GcnCache:
    """Per-layer inputs and pre-activations kept for the backward pass."""

    inputs: List[np.ndarray] = field(default_factory=list)
    propagated: List[np.ndarray] = field(default_factory=list)
    preacts: List[np.ndarray] = field(default_factory=list)


def gcn_forward(features, norm_adj, params: GcnParams):
    """``F_m = relu(A_hat F_{m-1} W_m)``; returns ``(F_M, cache)``.

    Leading batch dimensions are allowed: ``features`` may be ``(..., T, D)``
    with ``norm_adj`` of shape ``(..., T, T)``.
    """
    f = np.asarray(features, dtype=np.float64)
    a = np.asarray(norm_adj, dtype=np.float64)
    if a.shape[-2:] != (f.shape[-2], f.shape[-2]) or a.shape[:-2] != f.shape[:-2]:
        raise InvalidInputError(f"adjacency {a.shape} does not match features {f.shape}")
    if f.shape[-1] != params.dim:
        raise InvalidInputError(f"features have D={f.shape[-1]}, GCN expects {params.dim}")
    cache = GcnCache()
    h = f
    for m, w in enumerate(params.weights, 1):
        ah = a @ h
        z = ah @ w
        if not np.all(np.isfinite(z)):
            raise NumericOverflowError(f"non-finite pre-activation in GCN layer {m}")
        cache.inputs.append(h)
        cache.propagated.append(ah)
        cache.preacts.append(z)
        h = np.maximum(z, 0.0)
    return h, cache


def fuse_features(original, avg, gcn, mode: FusionMode = FusionMode()) -> np.ndarray:
    streams = [s for s, on in ((original, mode.include_original), (avg, mode.include_avg),
                               (gcn, mode.include_gcn)) if on]
    streams = [np.asarray(s, dtype=np.float64) for s in streams]
    shape = streams[0].shape
    for s in streams[1:]:
        if s.shape != shape:
            raise InvalidInputError(f"cannot fuse shapes {shape} and {s.shape}")
    if mode.combine == "concat":
        return np.concatenate(streams, axis=-1)
    out = streams[0].copy()
    for s in streams[1:]:
        out += s
    return out


def enhance_features(features, hp: AcgHyperparams, params: Optional[GcnParams],
                     mode: FusionMode = FusionMode(), variant: str = "combined"):
    """Full feature enhancement; returns ``(F', A')``.

    ``params`` may be ``None`` only when the fusion mode leaves out the GCN.
    """
    f = as_features(features)
    sparse, norm = build_graph(f, hp, variant)
    avg = graph_average(f, norm)
    if mode.include_gcn:
        if params is None:
            raise InvalidInputError("fusion mode includes the GCN but no parameters were given")
        gcn, _ = gcn_forward(f, norm, params)
    else:
        gcn = np.zeros_like(f)
    return fuse_features(f, avg, gcn, mode), sparse
