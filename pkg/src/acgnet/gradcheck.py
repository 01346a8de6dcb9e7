"""Central finite-difference checks for every hand-derived gradient.

Each check builds a small random instance, perturbs one entry at a time
and compares against the analytic gradient. Errors are reported as
``|analytic - numeric| / max(|analytic|, |numeric|, floor)`` where the
floor is the larger of an absolute ``FLOOR`` and ``SCALE_FLOOR`` times the
largest analytic entry. Entries far below the array's scale sit in the
round-off noise of the difference quotient and are judged absolutely.

Difference quotients are meaningless across a ReLU kink or a change in
the top-k pooled set, so instances with a pre-activation or a pooling
gap closer than ``KINK_MARGIN`` to a switch are redrawn.
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, NamedTuple

import numpy as np

from .graph import AcgHyperparams, build_graph
from .head import compute_cas
from .inference import FusionMode, gcn_forward, init_gcn
from .training import (EpmItem, TrainConfig, activations, epm_loss, epm_loss_grad, gcn_backward,
                       init_model, objective, prepare_batches)

STEP = 1e-5
FLOOR = 1e-6
SCALE_FLOOR = 1e-4
KINK_MARGIN = 1e-3
MAX_REDRAWS = 100
TOLERANCE = 1e-4


def relative_error(analytic, numeric, floor: float = FLOOR) -> float:
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    if a.size == 0:
        return 0.0
    floor = max(floor, SCALE_FLOOR * float(np.max(np.abs(a))))
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def numeric_grad(fn: Callable[[], float], arr: np.ndarray, step: float = STEP) -> np.ndarray:
    """Central differences of ``fn`` w.r.t. ``arr``, perturbed in place."""
    out = np.zeros_like(arr)
    for idx in np.ndindex(arr.shape):
        old = arr[idx]
        arr[idx] = old + step
        up = fn()
        arr[idx] = old - step
        down = fn()
        arr[idx] = old
        out[idx] = (up - down) / (2 * step)
    return out


def _size(rng):
    return int(rng.integers(2, 9)), int(rng.integers(1, 7))


def _graph_hp(rng, t):
    # loose thresholds so small random instances still have edges
    return AcgHyperparams(z=int(rng.integers(1, 4)), lam=float(rng.uniform(0.0, 0.4)),
                          k=int(rng.integers(1, t + 1)))


def check_epm(rng) -> float:
    """EPM loss w.r.t. the enhanced features of a random multi-video batch."""
    batch = []
    for _ in range(int(rng.integers(1, 4))):
        t, d = _size(rng)
        f = rng.standard_normal((t, d))
        sparse, _ = build_graph(f, _graph_hp(rng, t))
        batch.append(EpmItem(f, rng.standard_normal((t, d)), sparse, rng.random(t)))
    analytic = epm_loss_grad(batch)
    worst = 0.0
    for item, g in zip(batch, analytic):
        worst = max(worst, relative_error(g, numeric_grad(lambda: epm_loss(batch), item.enhanced)))
    return worst


def _preact_margin(cache) -> float:
    return min(float(np.min(np.abs(z), initial=np.inf)) for z in cache.preacts)


def _pool_margin(cas, pool_k: int) -> float:
    t = cas.shape[-2]
    if pool_k >= t:
        return np.inf
    ordered = -np.sort(-cas, axis=-2)
    return float(np.min(ordered[..., pool_k - 1, :] - ordered[..., pool_k, :]))


def _redraw(make):
    """Call ``make()`` until it returns an instance away from every switch point."""
    for _ in range(MAX_REDRAWS):
        inst = make()
        if inst is not None:
            return inst
    raise RuntimeError(f"no smooth instance found in {MAX_REDRAWS} draws")


def check_gcn(rng) -> Dict[str, float]:
    """GCN weights and input through a random linear readout."""

    def make():
        t, d = _size(rng)
        f = rng.standard_normal((t, d))
        _, norm = build_graph(f, _graph_hp(rng, t))
        params = init_gcn(d, int(rng.integers(1, 4)), rng)
        if _preact_margin(gcn_forward(f, norm, params)[1]) < KINK_MARGIN:
            return None
        return f, norm, params, rng.standard_normal((t, d))

    f, norm, params, readout = _redraw(make)

    def loss():
        return float(np.sum(readout * gcn_forward(f, norm, params)[0]))

    _, cache = gcn_forward(f, norm, params)
    g_in, g_w = gcn_backward(readout, cache, norm, params)
    errs = {"input": relative_error(g_in, numeric_grad(loss, f))}
    errs["weights"] = max(relative_error(g, numeric_grad(loss, w))
                          for g, w in zip(g_w, params.weights))
    return errs


class _Video(NamedTuple):
    features: np.ndarray
    labels: List[int]


MODES = (FusionMode(), FusionMode(combine="concat"),
         FusionMode(include_avg=False, combine="concat"))


def check_total(rng, mode: FusionMode = FusionMode(), epm_weight: float = 1.0) -> Dict[str, float]:
    """Joint objective w.r.t. head and GCN parameters, activations held fixed."""

    def make():
        t, d = _size(rng)
        c = int(rng.integers(1, 4))
        videos = [_Video(rng.standard_normal((t, d)), sorted(set(rng.integers(0, c, 2).tolist())))
                  for _ in range(int(rng.integers(1, 4)))]
        hp = _graph_hp(rng, t)
        config = TrainConfig(seed=int(rng.integers(0, 2**31)), pool_k=int(rng.integers(1, t + 1)))
        model = init_model(d, c, t, config, hp, mode)
        model.head.bias[:] = rng.standard_normal(c) * 0.5
        batches = prepare_batches(videos, hp, num_classes=c)
        for b in batches:
            head_in, _, cache = model.forward(b)
            cas = compute_cas(head_in, model.head)
            if (cache is not None and _preact_margin(cache) < KINK_MARGIN
                    or _pool_margin(cas, model.head.pool_k) < KINK_MARGIN):
                return None
        return model, batches

    model, batches = _redraw(make)
    frozen = activations(model, batches)

    def loss():
        return objective(model, batches, epm_weight, frozen).total

    obj = objective(model, batches, epm_weight, frozen)
    errs = {"classifier": relative_error(obj.grad_classifier,
                                         numeric_grad(loss, model.head.classifier)),
            "bias": relative_error(obj.grad_bias, numeric_grad(loss, model.head.bias))}
    errs["gcn"] = max(relative_error(g, numeric_grad(loss, w))
                      for g, w in zip(obj.grad_gcn, model.gcn.weights))
    return errs


@dataclass
class GradcheckReport:
    instances: int
    max_errors: Dict[str, float]
    tolerance: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return all(v < self.tolerance for v in self.max_errors.values())

    def lines(self) -> List[str]:
        out = [f"gradcheck over {self.instances} instances, tolerance {self.tolerance:g}"]
        for name, err in sorted(self.max_errors.items()):
            out.append(f"{name:22s} {err:.3e} {'ok' if err < self.tolerance else 'FAIL'}")
        return out


def run_suite(seed: int = 0, instances: int = 20) -> GradcheckReport:
    rng = np.random.default_rng(seed)
    worst: Dict[str, float] = {}

    def record(name, value):
        worst[name] = max(worst.get(name, 0.0), value)

    for _ in range(instances):
        record("epm/enhanced", check_epm(rng))
        for key, value in check_gcn(rng).items():
            record(f"gcn/{key}", value)
        for mode in MODES:
            for key, value in check_total(rng, mode).items():
                record(f"total[{mode.label}]/{key}", value)
    return GradcheckReport(instances, worst)
