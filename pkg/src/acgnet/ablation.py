"""Controlled sweeps over graph construction and feature fusion choices.

Every setting in a sweep trains on the same corpus split with the same
seed, so rows differ only in the setting itself.
"""

import csv
from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Optional, Sequence

from .graph import AcgHyperparams, default_k
from .inference import FusionMode
from .io import RunConfig
from .pipeline import fit_and_evaluate
from .synth import generate_corpus, split_corpus

LAMBDA_SWEEP = (0.05, 0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95)
VARIANT_NAMES = {"similarity": "G1", "difference": "G2", "combined": "G3", "temporal": "Gt"}

HEADER_NOTE = ("# G2 uses max(A_s - alpha * A_t, 0) / 2 before sparsification; "
               "negative weights are clamped to zero")


@dataclass(frozen=True)
class Setting:
    group: str
    name: str
    hp: Optional[AcgHyperparams]
    mode: FusionMode = FusionMode()
    variant: str = "combined"
    epm: bool = True

    @property
    def raw(self) -> bool:
        return self.hp is None


def _streams(orig, avg, gcn, combine="sum"):
    return FusionMode(orig, avg, gcn, combine)


# rows of the component table: (name, mode or None for raw features, epm)
FUSION_ROWS = (
    ("orig", None, False),
    ("avg", _streams(False, True, False), False),
    ("orig+avg:sum", _streams(True, True, False), False),
    ("orig+avg:concat", _streams(True, True, False, "concat"), False),
    ("orig+gcn:sum", _streams(True, False, True), False),
    ("orig+gcn:concat", _streams(True, False, True, "concat"), False),
    ("gcn+epm", _streams(False, False, True), True),
    ("avg+gcn+epm:sum", _streams(False, True, True), True),
    ("orig+gcn+epm:sum", _streams(True, False, True), True),
    ("orig+gcn+epm:concat", _streams(True, False, True, "concat"), True),
    ("orig+avg+gcn:sum", _streams(True, True, True), False),
    ("orig+avg+gcn+epm:sum", _streams(True, True, True), True),
    ("orig+avg+gcn+epm:concat", _streams(True, True, True, "concat"), True),
)


def ablation_settings(base: AcgHyperparams, num_segments: int) -> List[Setting]:
    t = num_segments
    k_default = default_k(t)
    out = [Setting("lambda", f"lambda={lam:.2f}", replace(base, lam=lam)) for lam in LAMBDA_SWEEP]
    for k in dict.fromkeys((1, 5, 20, k_default, t)):
        out.append(Setting("K", f"K={k}", replace(base, k=min(k, t))))
    out.append(Setting("K", "dense", replace(base, lam=0.0, k=t)))
    for variant, label in VARIANT_NAMES.items():
        out.append(Setting("variant", label, base, variant=variant))
    for name, mode, epm in FUSION_ROWS:
        out.append(Setting("fusion", name, None if mode is None else base, mode or FusionMode(),
                           epm=epm))
    return out


def run_setting(cfg: RunConfig, setting: Setting, corpus=None) -> Dict:
    corpus = corpus if corpus is not None else generate_corpus(cfg.synth)
    train_videos, test_videos = split_corpus(corpus, cfg.num_train)
    train_cfg = cfg.train if setting.epm else replace(cfg.train, epm_weight=0.0)
    outcome = fit_and_evaluate(train_videos, test_videos, cfg.synth.C, train_cfg, setting.hp,
                               setting.mode, setting.variant, cfg.iou_thresholds,
                               cfg.act_threshold)
    return outcome.maps


def run_ablation(cfg: RunConfig, settings: Optional[Sequence[Setting]] = None,
                 progress=None) -> List[dict]:
    corpus = generate_corpus(cfg.synth)
    if settings is None:
        settings = ablation_settings(cfg.graph, cfg.synth.T)
    rows = []
    for s in settings:
        maps = run_setting(cfg, s, corpus)
        rows.append({"setting": s, "maps": maps})
        if progress is not None:
            progress(s, maps)
    return rows


def write_ablation_csv(path, rows: Iterable[dict], thresholds: Sequence[float], seed: int) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(HEADER_NOTE + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "group", "setting", "variant", "lambda", "K", "streams", "epm"]
                   + [f"map@{t:.2f}" for t in thresholds] + ["average"])
        for row in rows:
            s: Setting = row["setting"]
            maps = row["maps"]
            hp = s.hp
            w.writerow([seed, s.group, s.name, "raw" if s.raw else VARIANT_NAMES[s.variant],
                        "" if s.raw else f"{hp.lam:.2f}", "" if s.raw else hp.k or "default",
                        "orig" if s.raw else s.mode.label, int(s.epm and not s.raw)]
                       + [f"{maps['map'][t]:.6f}" for t in thresholds]
                       + [f"{maps['average']:.6f}"])
