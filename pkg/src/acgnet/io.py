"""On-disk formats: feature files, annotations, proposals, run configs.

Feature files are little-endian: the magic ``ACGF``, then version, T and D
as uint32, then ``T * D`` float32 values in row-major order.
"""

import json
import struct
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .evaluation import DEFAULT_IOU_THRESHOLDS, GroundTruthInstance
from .graph import GRAPH_VARIANTS, AcgHyperparams
from .head import HeadParams, Proposal
from .inference import FusionMode, GcnParams
from .synth import SynthConfig
from .training import Model, TrainConfig

MAGIC = b"ACGF"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sIII")


class FormatError(ValueError):
    """A file does not conform to its declared format."""

    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        super().__init__(message if offset is None else f"{message} (at byte offset {offset})")


def write_feature_file(path, features) -> None:
    arr = np.asarray(features)
    if arr.ndim != 2:
        raise ValueError(f"feature matrix must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("feature matrix contains non-finite entries")
    t, d = arr.shape
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, FORMAT_VERSION, t, d))
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_feature_file(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < HEADER.size:
        raise FormatError(f"file is {len(data)} bytes, shorter than the {HEADER.size}-byte header",
                          len(data))
    magic, version, t, d = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}", 4)
    expected = HEADER.size + 4 * t * d
    if len(data) != expected:
        raise FormatError(f"length mismatch: expected {expected} bytes for T={t}, D={d}, "
                          f"got {len(data)}", min(len(data), expected))
    return np.frombuffer(data, dtype="<f4", offset=HEADER.size).reshape(t, d).astype(np.float64)


@dataclass
class Annotation:
    video_id: str
    labels: List[int]
    instances: Optional[List[GroundTruthInstance]] = None

    def to_json(self) -> dict:
        rec = {"video_id": self.video_id, "labels": list(self.labels)}
        if self.instances is not None:
            rec["instances"] = [{"class_id": g.class_id, "start_seg": g.start_seg,
                                 "end_seg": g.end_seg} for g in self.instances]
        return rec


def write_annotations(path, annotations) -> None:
    with open(path, "w") as fh:
        for a in annotations:
            fh.write(json.dumps(a.to_json()) + "\n")


def read_annotations(path) -> List[Annotation]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                vid = str(rec["video_id"])
                labels = [int(c) for c in rec["labels"]]
                instances = None
                if "instances" in rec:
                    instances = [GroundTruthInstance(vid, int(g["class_id"]), int(g["start_seg"]),
                                                     int(g["end_seg"])) for g in rec["instances"]]
            except (ValueError, KeyError, TypeError) as exc:
                raise FormatError(f"line {lineno} of {path}: {exc}") from exc
            out.append(Annotation(vid, labels, instances))
    return out


def write_proposals(path, proposals) -> None:
    with open(path, "w") as fh:
        for p in proposals:
            fh.write(json.dumps(p.to_json()) + "\n")


def read_proposals(path) -> List[Proposal]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out.append(Proposal(int(rec["class_id"]), int(rec["start_seg"]),
                                    int(rec["end_seg"]), float(rec["score"]),
                                    str(rec["video_id"])))
            except (ValueError, KeyError, TypeError) as exc:
                raise FormatError(f"line {lineno} of {path}: {exc}") from exc
    return out


def save_arrays(path, **arrays) -> None:
    """Parameters are stored as an uncompressed ``.npz`` archive."""
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def save_model(path, model: Model) -> None:
    """Weights plus the structural settings needed to rebuild the model."""
    meta = {"pool_k": model.head.pool_k, "variant": model.variant,
            "mode": asdict(model.mode), "hp": None if model.hp is None else asdict(model.hp)}
    arrays = {"meta": np.array(json.dumps(meta, sort_keys=True)),
              "head_classifier": model.head.classifier, "head_bias": model.head.bias}
    if model.gcn is not None:
        for m, w in enumerate(model.gcn.weights):
            arrays[f"gcn_{m}"] = w
    save_arrays(path, **arrays)


def load_model(path) -> Model:
    try:
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            head = HeadParams(data["head_classifier"], data["head_bias"], int(meta["pool_k"]))
            layers = sorted((k for k in data.files if k.startswith("gcn_")),
                            key=lambda k: int(k[4:]))
            gcn = GcnParams([data[k] for k in layers]) if layers else None
    except (KeyError, ValueError, OSError) as exc:
        raise FormatError(f"{path}: not a saved model ({exc})") from exc
    hp = None if meta["hp"] is None else AcgHyperparams(**meta["hp"])
    return Model(head, gcn, hp, FusionMode(**meta["mode"]), meta["variant"])


def save_sparse_adjacency(path, sparse) -> None:
    """Nonzero entries of a sparsified graph as ``rows``, ``cols``, ``weights``."""
    sparse = np.asarray(sparse)
    rows, cols = np.nonzero(sparse)
    save_arrays(path, shape=np.array(sparse.shape), rows=rows, cols=cols,
                weights=sparse[rows, cols])


def load_sparse_adjacency(path) -> np.ndarray:
    with np.load(path, allow_pickle=False) as data:
        out = np.zeros(tuple(data["shape"]))
        out[data["rows"], data["cols"]] = data["weights"]
    return out


# -- run configuration ------------------------------------------------------

def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_range(text: str):
    parts = [int(p) for p in text.replace("-", ",").split(",") if p.strip()]
    if len(parts) == 1:
        return (parts[0], parts[0])
    if len(parts) != 2:
        raise ValueError(f"not a range: {text!r}")
    return tuple(parts)


def _parse_optional_int(text: str):
    return None if text.strip().lower() in ("", "none", "auto") else int(text)


def _parse_floats(text: str):
    return tuple(float(p) for p in text.split(",") if p.strip())


@dataclass
class RunConfig:
    graph: AcgHyperparams = field(default_factory=AcgHyperparams)
    fusion: FusionMode = field(default_factory=FusionMode)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    iou_thresholds: tuple = DEFAULT_IOU_THRESHOLDS
    act_threshold: float = 0.5
    num_train: int = 40
    graph_variant: str = "combined"

    @property
    def seed(self) -> int:
        return self.train.seed

    def with_seed(self, seed: int) -> "RunConfig":
        """All randomness derives from one seed shared by the corpus and the model."""
        return replace(self, train=replace(self.train, seed=seed),
                       synth=replace(self.synth, seed=seed))


# key -> (section, attribute, parser)
_KEYS: Dict[str, tuple] = {
    "Z": ("graph", "z", int),
    "alpha": ("graph", "alpha", float),
    "lambda": ("graph", "lam", float),
    "K": ("graph", "k", _parse_optional_int),
    "graph_variant": (None, "graph_variant", str),
    "include_original": ("fusion", "include_original", _parse_bool),
    "include_avg": ("fusion", "include_avg", _parse_bool),
    "include_gcn": ("fusion", "include_gcn", _parse_bool),
    "fusion": ("fusion", "combine", str),
    "learning_rate": ("train", "learning_rate", float),
    "epochs": ("train", "epochs", int),
    "seed": ("train", "seed", int),
    "epm_weight": ("train", "epm_weight", float),
    "gcn_layers": ("train", "gcn_layers", int),
    "pool_k": ("train", "pool_k", _parse_optional_int),
    "iou_thresholds": (None, "iou_thresholds", _parse_floats),
    "act_threshold": (None, "act_threshold", float),
    "num_train": (None, "num_train", int),
}
_RANGE_FIELDS = {"instances_per_video", "instance_len", "classes_per_video"}
for _f in fields(SynthConfig):
    if _f.name == "seed":
        continue
    if _f.name in _RANGE_FIELDS:
        _parser = _parse_range
    elif _f.type in (int, "int"):
        _parser = int
    else:
        _parser = float
    _KEYS[_f.name] = ("synth", _f.name, _parser)


def parse_run_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    values: Dict[tuple, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise FormatError(f"{source}:{lineno}: unknown key {key!r}")
        section, attr, parser = _KEYS[key]
        try:
            values[(section, attr)] = parser(value)
        except ValueError as exc:
            raise FormatError(f"{source}:{lineno}: bad value for {key}: {exc}") from exc
    try:
        return build_run_config(values)
    except ValueError as exc:
        raise FormatError(f"{source}: {exc}") from exc


def build_run_config(values: Dict[tuple, object]) -> RunConfig:
    by_section: Dict[Optional[str], dict] = {}
    for (section, attr), v in values.items():
        by_section.setdefault(section, {})[attr] = v
    base = RunConfig()
    cfg = RunConfig(
        graph=replace(base.graph, **by_section.get("graph", {})),
        fusion=replace(base.fusion, **by_section.get("fusion", {})),
        train=replace(base.train, **by_section.get("train", {})),
        synth=replace(base.synth, **by_section.get("synth", {})),
        **by_section.get(None, {}),
    )
    if "seed" in by_section.get("train", {}):
        cfg = cfg.with_seed(cfg.train.seed)
    if cfg.graph_variant not in GRAPH_VARIANTS:
        raise ValueError(f"graph_variant must be one of {GRAPH_VARIANTS}, got {cfg.graph_variant!r}")
    if not cfg.iou_thresholds or not all(0 < t <= 1 for t in cfg.iou_thresholds):
        raise ValueError("iou_thresholds must be a non-empty list of values in (0, 1]")
    return cfg


def load_run_config(path) -> RunConfig:
    return parse_run_config(Path(path).read_text(), str(path))


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "auto"
    if isinstance(v, tuple):
        return ",".join(_format(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def dump_run_config(cfg: RunConfig) -> str:
    lines = []
    for key, (section, attr, _) in _KEYS.items():
        obj = cfg if section is None else getattr(cfg, section)
        lines.append(f"{key} = {_format(getattr(obj, attr))}")
    lines.append(f"seed = {cfg.seed}")
    return "\n".join(dict.fromkeys(lines)) + "\n"
