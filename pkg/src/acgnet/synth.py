"""Seeded synthetic corpora of untrimmed-video segment features.

Each video is a background noise sequence with a few planted action
instances. An instance segment is its class prototype plus independent
per-segment noise (temporal incoherence); a random subset of instance
segments additionally loses a fraction of its coordinates (spatial
incompleteness, an occlusion-like dropout).
"""

import itertools
from dataclasses import dataclass, field, fields
from typing import List, Tuple

import numpy as np

from .evaluation import GroundTruthInstance


class GenerationError(RuntimeError):
    pass


@dataclass
class SynthConfig:
    num_videos: int = 60
    T: int = 64
    D: int = 32
    C: int = 5
    instances_per_video: Tuple[int, int] = (1, 3)
    instance_len: Tuple[int, int] = (4, 12)
    classes_per_video: Tuple[int, int] = (1, 2)
    occlusion_rate: float = 0.5
    occlusion_frac: float = 0.5
    noise_sigma: float = 0.3
    background_sigma: float = 0.6
    prototype_max_cos: float = 0.3
    min_gap: int = 1
    seed: int = 0

    def __post_init__(self):
        for name in ("occlusion_rate", "occlusion_frac", "prototype_max_cos"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in ("noise_sigma", "background_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("instances_per_video", "instance_len", "classes_per_video"):
            lo, hi = getattr(self, name)
            if lo < 1 or hi < lo:
                raise ValueError(f"{name} must be a range lo <= hi with lo >= 1, got {(lo, hi)}")
        if self.instance_len[1] > self.T:
            raise ValueError("instance_len maximum exceeds T")
        if min(self.num_videos, self.T, self.D, self.C) < 1 and self.num_videos != 0:
            raise ValueError("T, D and C must be positive")

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass
class VideoRecord:
    video_id: str
    features: np.ndarray
    labels: List[int]
    instances: List[GroundTruthInstance] = field(default_factory=list)
    corrupted: np.ndarray = None
    clean: np.ndarray = None


@dataclass
class SynthCorpus:
    videos: List[VideoRecord]
    prototypes: np.ndarray
    config: SynthConfig = None


def draw_prototypes(num_classes: int, dim: int, max_cos: float, rng,
                    max_tries: int = 10000) -> np.ndarray:
    """Unit vectors with pairwise cosine at most ``max_cos`` (rejection sampling)."""
    protos = []
    tries = 0
    while len(protos) < num_classes:
        tries += 1
        if tries > max_tries:
            raise GenerationError(
                f"could not draw {num_classes} prototypes with cosine <= {max_cos} in D={dim}")
        v = rng.standard_normal(dim)
        v /= np.linalg.norm(v)
        if all(float(v @ p) <= max_cos for p in protos):
            protos.append(v)
    return np.array(protos)


def _place_instances(lengths, num_segments, min_gap, rng):
    """Random non-overlapping starts separated by at least ``min_gap`` segments."""
    n = len(lengths)
    slack = num_segments - sum(lengths) - min_gap * (n - 1)
    if slack < 0:
        raise GenerationError(
            f"cannot fit instances of lengths {list(lengths)} into {num_segments} segments")
    # distribute the slack over n + 1 gaps, uniformly over compositions
    cuts = np.sort(rng.integers(0, slack + 1, size=n))
    gaps = np.diff(np.concatenate([[0], cuts]))
    order = rng.permutation(n)
    starts = {}
    pos = 0
    for rank, idx in enumerate(order):
        pos += gaps[rank] + (min_gap if rank else 0)
        starts[int(idx)] = int(pos)
        pos += lengths[idx]
    return [starts[i] for i in range(n)]


def _make_video(index, cfg: SynthConfig, prototypes, rng) -> VideoRecord:
    t, d = cfg.T, cfg.D
    feats = cfg.background_sigma * rng.standard_normal((t, d)) / np.sqrt(d)
    clean = np.zeros((t, d))
    corrupted = np.zeros(t, dtype=bool)
    n_inst = int(rng.integers(cfg.instances_per_video[0], cfg.instances_per_video[1] + 1))
    n_cls = int(rng.integers(cfg.classes_per_video[0], cfg.classes_per_video[1] + 1))
    n_cls = min(n_cls, n_inst, cfg.C)
    video_classes = rng.choice(cfg.C, size=n_cls, replace=False)
    inst_classes = list(video_classes) + list(rng.choice(video_classes, size=n_inst - n_cls))
    lengths = rng.integers(cfg.instance_len[0], cfg.instance_len[1] + 1, size=n_inst)
    starts = _place_instances(lengths, t, cfg.min_gap, rng)
    n_drop = int(round(cfg.occlusion_frac * d))
    vid = f"video_{index:04d}"
    instances = []
    for c, start, length in zip(inst_classes, starts, lengths):
        c = int(c)
        end = start + int(length) - 1
        instances.append(GroundTruthInstance(vid, c, start, end))
        for s in range(start, end + 1):
            seg = prototypes[c] + cfg.noise_sigma * rng.standard_normal(d) / np.sqrt(d)
            clean[s] = seg
            if rng.random() < cfg.occlusion_rate and n_drop:
                seg = seg.copy()
                seg[rng.choice(d, size=n_drop, replace=False)] = 0.0
                corrupted[s] = True
            feats[s] = seg
    instances.sort(key=lambda g: g.start_seg)
    return VideoRecord(vid, feats, sorted({g.class_id for g in instances}),
                       instances, corrupted, clean)


def generate_corpus(cfg: SynthConfig = SynthConfig()) -> SynthCorpus:
    rng = np.random.default_rng(cfg.seed)
    prototypes = draw_prototypes(cfg.C, cfg.D, cfg.prototype_max_cos, rng)
    videos = [_make_video(i, cfg, prototypes, rng) for i in range(cfg.num_videos)]
    return SynthCorpus(videos, prototypes, cfg)


def split_corpus(corpus: SynthCorpus, num_train: int):
    return corpus.videos[:num_train], corpus.videos[num_train:]


def _mean_cosines(segments, classes):
    if len(segments) < 2:
        return float("nan"), float("nan")
    x = np.asarray(segments)
    nrm = np.linalg.norm(x, axis=1)
    x = x / np.where(nrm > 0, nrm, 1.0)[:, None]
    cos = x @ x.T
    cls = np.asarray(classes)
    same = cls[:, None] == cls[None, :]
    off = ~np.eye(len(cls), dtype=bool)
    in_mask, cross_mask = same & off, ~same
    in_mean = float(cos[in_mask].mean()) if in_mask.any() else float("nan")
    cross_mean = float(cos[cross_mask].mean()) if cross_mask.any() else float("nan")
    return in_mean, cross_mean


def corrupt_report(corpus: SynthCorpus) -> dict:
    """Per-class instance counts, corruption fraction and cosine statistics."""
    num_classes = corpus.prototypes.shape[0] if corpus.prototypes is not None else 0
    counts = [0] * num_classes
    inst_segments = corrupted = 0
    clean_segs, clean_cls = [], []
    for v in corpus.videos:
        for g in v.instances:
            counts[g.class_id] += 1
            for s in range(g.start_seg, g.end_seg + 1):
                inst_segments += 1
                if v.corrupted is not None and v.corrupted[s]:
                    corrupted += 1
                else:
                    clean_segs.append(v.features[s])
                    clean_cls.append(g.class_id)
    in_cos, cross_cos = _mean_cosines(clean_segs, clean_cls)
    return {
        "num_videos": len(corpus.videos),
        "class_counts": counts,
        "total_instances": sum(counts),
        "instance_segments": inst_segments,
        "corrupted_segments": corrupted,
        "corruption_fraction": corrupted / inst_segments if inst_segments else 0.0,
        "in_class_cosine": in_cos,
        "cross_class_cosine": cross_cos,
    }


def all_instances(videos) -> List[GroundTruthInstance]:
    return list(itertools.chain.from_iterable(v.instances for v in videos))
