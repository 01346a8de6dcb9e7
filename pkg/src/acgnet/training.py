"""Easy-positive-mining loss, manual backpropagation and full-batch SGD.

The trainable pieces are the GCN weights and the localization head. The
graph itself depends only on the original features, so it is built once
per video and reused across epochs.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from . import kernels
from .graph import AcgHyperparams, InvalidInputError, as_features, build_graph
from .head import (HeadParams, compute_cas, default_pool_k, head_loss_and_grad, init_head,
                   label_vector)
from .inference import (FusionMode, GcnCache, GcnParams, NumericOverflowError, fuse_features,
                        gcn_forward, graph_average, init_gcn)

log = logging.getLogger(__name__)

# offsets applied to the run seed so each consumer gets its own stream
GCN_SEED_OFFSET = 101
HEAD_SEED_OFFSET = 202


class EpmItem(NamedTuple):
    original: np.ndarray
    enhanced: np.ndarray
    sparse_adj: np.ndarray
    activation: np.ndarray


def _check_item(item: EpmItem):
    t = item.original.shape[0]
    if (item.enhanced.shape != item.original.shape or item.sparse_adj.shape != (t, t)
            or item.activation.shape != (t,)):
        raise InvalidInputError(
            f"inconsistent EPM item: original {item.original.shape}, enhanced "
            f"{item.enhanced.shape}, adjacency {item.sparse_adj.shape}, "
            f"activation {item.activation.shape}")


def epm_loss(batch: Sequence[EpmItem]) -> float:
    """Mean over videos of the activation-weighted squared distances along graph edges."""
    if not batch:
        return 0.0
    total = 0.0
    for item in batch:
        _check_item(item)
        loss, _ = kernels.epm_term(item.enhanced, item.original, item.sparse_adj, item.activation)
        total += loss
    return total / len(batch)


def epm_loss_grad(batch: Sequence[EpmItem]) -> List[np.ndarray]:
    """Gradient of :func:`epm_loss` w.r.t. each video's enhanced features.

    Original features and activations are constants.
    """
    grads = []
    for item in batch:
        _check_item(item)
        _, g = kernels.epm_term(item.enhanced, item.original, item.sparse_adj, item.activation)
        grads.append(g / len(batch))
    return grads


def gcn_backward(upstream_grad, cache: GcnCache, norm_adj, params: GcnParams):
    """Backpropagate through every ``relu(A_hat H W)`` layer.

    Returns ``(grad wrt the GCN input, [grad wrt each weight])``.
    """
    g = np.asarray(upstream_grad, dtype=np.float64)
    a = np.asarray(norm_adj, dtype=np.float64)
    m_layers = params.num_layers
    if len(cache.preacts) != m_layers or cache.preacts[-1].shape != g.shape:
        raise InvalidInputError("GCN cache does not match the upstream gradient or parameters")
    a_t = np.swapaxes(a, -1, -2)
    dim = params.dim
    grad_w = [None] * m_layers
    for m in range(m_layers - 1, -1, -1):
        dz = g * (cache.preacts[m] > 0)
        # summed over any leading batch axes
        grad_w[m] = cache.propagated[m].reshape(-1, dim).T @ dz.reshape(-1, dim)
        g = a_t @ (dz @ params.weights[m].T)
        if not np.all(np.isfinite(g)):
            raise NumericOverflowError(f"non-finite gradient in GCN layer {m + 1}")
    return g, grad_w


@dataclass
class TrainConfig:
    learning_rate: float = 0.3
    epochs: int = 200
    seed: int = 0
    epm_weight: float = 1.0
    gcn_layers: int = 2
    pool_k: Optional[int] = None

    def __post_init__(self):
        if self.learning_rate < 0:
            raise InvalidInputError("learning_rate must be non-negative")
        if self.epochs < 0:
            raise InvalidInputError("epochs must be non-negative")
        if self.epm_weight < 0:
            raise InvalidInputError("epm_weight must be non-negative")


@dataclass
class PreparedBatch:
    """Equal-length videos stacked on a leading axis, graphs precomputed."""

    features: np.ndarray
    targets: np.ndarray
    sparse: Optional[np.ndarray] = None
    norm: Optional[np.ndarray] = None
    avg: Optional[np.ndarray] = None
    indices: List[int] = field(default_factory=list)

    def __len__(self):
        return self.features.shape[0]


def prepare_batches(videos, hp: Optional[AcgHyperparams], variant: str = "combined",
                    num_classes: int = 1) -> List[PreparedBatch]:
    """Group videos by length and attach their graphs.

    ``hp=None`` skips graph construction (raw-feature baseline). Groups
    appear in order of first occurrence so reductions are reproducible.
    """
    groups: dict = {}
    for idx, v in enumerate(videos):
        f = as_features(v.features)
        groups.setdefault(f.shape, []).append((idx, f, label_vector(v.labels, num_classes)))
    out = []
    for members in groups.values():
        idx = [m[0] for m in members]
        feats = np.stack([m[1] for m in members])
        targets = np.stack([m[2] for m in members])
        if hp is None:
            out.append(PreparedBatch(feats, targets, indices=idx))
            continue
        graphs = [build_graph(f, hp, variant) for f in feats]
        sparse = np.stack([g[0] for g in graphs])
        norm = np.stack([g[1] for g in graphs])
        out.append(PreparedBatch(feats, targets, sparse, norm, graph_average(feats, norm), idx))
    return out


@dataclass
class Model:
    """Parameters plus the structural choices needed to run them.

    ``gcn`` is ``None`` for the raw-feature baseline, where the head sees
    the original features directly.
    """

    head: HeadParams
    gcn: Optional[GcnParams] = None
    hp: Optional[AcgHyperparams] = None
    mode: FusionMode = FusionMode()
    variant: str = "combined"

    @property
    def raw(self) -> bool:
        return self.hp is None

    def copy(self) -> "Model":
        return Model(self.head.copy(), None if self.gcn is None else self.gcn.copy(),
                     self.hp, self.mode, self.variant)

    def forward(self, batch: PreparedBatch):
        """Returns ``(head input, sum-fused features for EPM, gcn cache)``."""
        f = batch.features
        if self.raw:
            return f, None, None
        cache = None
        if self.mode.include_gcn:
            gcn_out, cache = gcn_forward(f, batch.norm, self.gcn)
        else:
            gcn_out = np.zeros_like(f)
        head_in = fuse_features(f, batch.avg, gcn_out, self.mode)
        if self.mode.combine == "sum":
            pulled = head_in
        else:
            pulled = fuse_features(f, batch.avg, gcn_out, replace(self.mode, combine="sum"))
        return head_in, pulled, cache

    def enhance(self, features):
        """``(head input features, sparse graph)`` for one feature matrix."""
        batch = prepare_batches([_Bare(features)], self.hp, self.variant,
                                self.head.num_classes)[0]
        head_in, _, _ = self.forward(batch)
        return head_in[0], None if batch.sparse is None else batch.sparse[0]


class _Bare(NamedTuple):
    features: np.ndarray
    labels: tuple = ()


def init_model(in_dim: int, num_classes: int, num_segments: int, config: TrainConfig,
               hp: Optional[AcgHyperparams] = AcgHyperparams(), mode: FusionMode = FusionMode(),
               variant: str = "combined") -> Model:
    pool_k = config.pool_k or default_pool_k(num_segments)
    if hp is None:
        return Model(init_head(in_dim, num_classes, pool_k, config.seed + HEAD_SEED_OFFSET))
    gcn = init_gcn(in_dim, config.gcn_layers, config.seed + GCN_SEED_OFFSET)
    head = init_head(mode.output_dim(in_dim), num_classes, pool_k, config.seed + HEAD_SEED_OFFSET)
    return Model(head, gcn, hp, mode, variant)


@dataclass
class Objective:
    total: float
    head_loss: float
    epm_loss: float
    grad_classifier: np.ndarray
    grad_bias: np.ndarray
    grad_gcn: Optional[List[np.ndarray]] = None


def _gcn_block(grad_head_in, mode: FusionMode, dim: int):
    if mode.combine == "sum":
        return grad_head_in
    offset = dim * (int(mode.include_original) + int(mode.include_avg))
    return grad_head_in[..., offset:offset + dim]


def activations(model: Model, batches: Sequence[PreparedBatch]) -> List[np.ndarray]:
    """Per-segment maximum class score, shape ``(N, T)`` per batch."""
    out = []
    for b in batches:
        head_in, _, _ = model.forward(b)
        out.append(np.clip(compute_cas(head_in, model.head).max(axis=-1), 0.0, 1.0))
    return out


def objective(model: Model, batches: Sequence[PreparedBatch], epm_weight: float = 1.0,
              frozen_activations: Optional[Sequence[np.ndarray]] = None) -> Objective:
    """Mean head loss plus ``epm_weight`` times the EPM loss, with all gradients.

    The EPM weights come from the current head unless ``frozen_activations``
    supplies them; either way they are constants for differentiation.
    Reductions run in video order so results are reproducible.
    """
    n = sum(len(b) for b in batches)
    head = model.head
    g_cls = np.zeros_like(head.classifier)
    g_bias = np.zeros_like(head.bias)
    g_gcn = None if model.raw else [np.zeros_like(w) for w in model.gcn.weights]
    head_total = epm_total = 0.0
    use_epm = not model.raw and epm_weight > 0
    for bi, b in enumerate(batches):
        head_in, pulled, cache = model.forward(b)
        loss, gc, gb, g_in, cas = head_loss_and_grad(head_in, b.targets, head)
        head_total += loss
        g_cls += gc / n
        g_bias += gb / n
        if model.raw or not model.mode.include_gcn and not use_epm:
            continue
        upstream = _gcn_block(g_in / n, model.mode, b.features.shape[-1]) \
            if model.mode.include_gcn else None
        if use_epm:
            if frozen_activations is not None:
                act = frozen_activations[bi]
            else:
                act = np.clip(cas.max(axis=-1), 0.0, 1.0)
            g_epm = np.empty_like(pulled)
            for v in range(len(b)):
                term, g_epm[v] = kernels.epm_term(pulled[v], b.features[v], b.sparse[v], act[v])
                epm_total += term
            if upstream is not None:
                upstream = upstream + (epm_weight / n) * g_epm
        if upstream is not None:
            _, gw = gcn_backward(upstream, cache, b.norm, model.gcn)
            for acc, g in zip(g_gcn, gw):
                acc += g
    head_mean = head_total / n
    epm_mean = epm_total / n
    return Objective(head_mean + epm_weight * epm_mean, head_mean, epm_mean, g_cls, g_bias, g_gcn)


@dataclass
class TrainResult:
    model: Model
    history: List[tuple] = field(default_factory=list)


class TrainingDivergedError(ArithmeticError):
    pass


def train(videos, config: TrainConfig = TrainConfig(), hp: Optional[AcgHyperparams] = AcgHyperparams(),
          mode: FusionMode = FusionMode(), variant: str = "combined",
          model: Optional[Model] = None, num_classes: Optional[int] = None) -> TrainResult:
    """Full-batch gradient descent on the joint objective.

    ``hp=None`` trains the head alone on raw features. ``history`` holds
    ``(epoch, head_loss, epm_loss, total)`` evaluated before each update.
    """
    videos = list(videos)
    if not videos:
        raise InvalidInputError("cannot train on an empty corpus")
    if model is not None:
        num_classes = model.head.num_classes
        hp, mode, variant = model.hp, model.mode, model.variant
    elif num_classes is None:
        num_classes = max((c for v in videos for c in v.labels), default=0) + 1
    prepared = prepare_batches(videos, hp, variant, num_classes)
    if model is None:
        t, d = prepared[0].features.shape[1:]
        model = init_model(d, num_classes, t, config, hp, mode, variant)
    model = model.copy()
    history = []
    lr = config.learning_rate
    for epoch in range(config.epochs):
        obj = objective(model, prepared, config.epm_weight)
        for name, value in (("head", obj.head_loss), ("epm", obj.epm_loss), ("total", obj.total)):
            if not np.isfinite(value):
                raise TrainingDivergedError(f"{name} loss became non-finite at epoch {epoch}")
        history.append((epoch, obj.head_loss, obj.epm_loss, obj.total))
        if lr == 0:
            continue
        model.head.classifier -= lr * obj.grad_classifier
        model.head.bias -= lr * obj.grad_bias
        if obj.grad_gcn is not None and model.mode.include_gcn:
            for w, g in zip(model.gcn.weights, obj.grad_gcn):
                w -= lr * g
    if history:
        log.info("trained %d epochs: total loss %.4f -> %.4f", config.epochs,
                 history[0][3], history[-1][3])
    return TrainResult(model, history)


def write_history_csv(path, history) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,head_loss,epm_loss,total\n")
        for epoch, h, e, t in history:
            fh.write(f"{epoch},{h:.10g},{e:.10g},{t:.10g}\n")
