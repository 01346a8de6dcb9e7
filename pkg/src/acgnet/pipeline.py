"""Train / predict / evaluate glue shared by the CLI and the experiments."""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

from .evaluation import DEFAULT_IOU_THRESHOLDS, mean_ap
from .graph import AcgHyperparams
from .head import Proposal, compute_cas, generate_proposals, predict_classes, video_scores
from .inference import FusionMode
from .synth import all_instances
from .training import Model, TrainConfig, TrainResult, prepare_batches, train


def predict(model: Model, videos, act_threshold: float = 0.5,
            class_threshold: float = 0.5) -> List[Proposal]:
    videos = list(videos)
    per_video = [None] * len(videos)
    for batch in prepare_batches(videos, model.hp, model.variant, model.head.num_classes):
        head_in, _, _ = model.forward(batch)
        cas = compute_cas(head_in, model.head)
        scores = video_scores(cas, model.head.pool_k)
        for row, idx in enumerate(batch.indices):
            classes = predict_classes(scores[row], class_threshold)
            per_video[idx] = generate_proposals(cas[row], classes, act_threshold,
                                                videos[idx].video_id)
    return [p for props in per_video for p in props]


@dataclass
class RunOutcome:
    result: TrainResult
    proposals: List[Proposal]
    maps: Dict


def fit_and_evaluate(train_videos, test_videos, num_classes: int,
                     config: TrainConfig = TrainConfig(),
                     hp: Optional[AcgHyperparams] = AcgHyperparams(),
                     mode: FusionMode = FusionMode(), variant: str = "combined",
                     iou_thresholds: Sequence[float] = DEFAULT_IOU_THRESHOLDS,
                     act_threshold: float = 0.5) -> RunOutcome:
    """Train on one split and report mAP on the other. ``hp=None`` is the raw baseline."""
    result = train(train_videos, config, hp, mode, variant, num_classes=num_classes)
    proposals = predict(result.model, test_videos, act_threshold)
    maps = mean_ap(proposals, all_instances(test_videos), iou_thresholds)
    return RunOutcome(result, proposals, maps)
