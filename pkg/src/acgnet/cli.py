"""Command-line entry point: synth, train, enhance, eval, gradcheck, ablate."""

import argparse
import json
import logging
import shutil
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from . import gradcheck as gc
from .ablation import ablation_settings, run_ablation, write_ablation_csv
from .evaluation import mean_ap, write_map_csv
from .graph import InvalidInputError
from .io import (Annotation, FormatError, RunConfig, dump_run_config, load_model, load_run_config,
                 read_annotations, read_feature_file, read_proposals, save_model,
                 save_sparse_adjacency, write_annotations, write_feature_file, write_proposals)
from .pipeline import predict
from .synth import VideoRecord, corrupt_report, generate_corpus, split_corpus
from .training import train, write_history_csv

log = logging.getLogger("acgnet")


class UsageError(Exception):
    pass


class OutputDir:
    """Collects everything a command writes so a failed run leaves nothing behind."""

    def __init__(self, path):
        self.path = Path(path)
        self.created_root = not self.path.exists()
        self.written: List[Path] = []

    def __enter__(self):
        self.path.mkdir(parents=True, exist_ok=True)
        return self

    def file(self, name) -> Path:
        p = self.path / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.written.append(p)
        return p

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            return False
        if self.created_root:
            shutil.rmtree(self.path, ignore_errors=True)
        else:
            for p in self.written:
                p.unlink(missing_ok=True)
        return False


def _parse_iou(text: str):
    try:
        vals = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise UsageError(f"--iou expects a comma-separated list of numbers, got {text!r}")
    if not vals or not all(0 < v <= 1 for v in vals):
        raise UsageError("--iou values must lie in (0, 1]")
    return vals


def _run_config(args) -> RunConfig:
    cfg = load_run_config(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "iou", None):
        cfg = replace(cfg, iou_thresholds=_parse_iou(args.iou))
    if getattr(args, "fusion", None):
        cfg = replace(cfg, fusion=replace(cfg.fusion, combine=args.fusion))
    if getattr(args, "no_epm", False):
        cfg = replace(cfg, train=replace(cfg.train, epm_weight=0.0))
    return cfg


def _load_split(data_dir: Path, split: str) -> List[VideoRecord]:
    ann_path = data_dir / f"{split}.jsonl"
    if not ann_path.exists():
        raise UsageError(f"{ann_path} not found; run 'acgnet synth' first")
    videos = []
    for a in read_annotations(ann_path):
        feats = read_feature_file(data_dir / "features" / f"{a.video_id}.acgf")
        videos.append(VideoRecord(a.video_id, feats, a.labels, a.instances or []))
    return videos


def cmd_synth(args, out: OutputDir) -> int:
    cfg = _run_config(args)
    out.file("config.cfg").write_text(dump_run_config(cfg))
    corpus = generate_corpus(cfg.synth)
    for v in corpus.videos:
        write_feature_file(out.file(f"features/{v.video_id}.acgf"), v.features)
    train_videos, test_videos = split_corpus(corpus, cfg.num_train)
    for name, vids in (("train", train_videos), ("test", test_videos)):
        write_annotations(out.file(f"{name}.jsonl"),
                          [Annotation(v.video_id, v.labels, v.instances) for v in vids])
    report = corrupt_report(corpus)
    out.file("report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(corpus.videos)} videos ({len(train_videos)} train / {len(test_videos)} test)"
          f" to {out.path}")
    return 0


def cmd_train(args, out: OutputDir) -> int:
    cfg = _run_config(args)
    data = Path(args.data)
    out.file("config.cfg").write_text(dump_run_config(cfg))
    train_videos = _load_split(data, "train")
    hp = None if args.raw else cfg.graph
    result = train(train_videos, cfg.train, hp, cfg.fusion, cfg.graph_variant,
                   num_classes=cfg.synth.C)
    save_model(out.file("model.npz"), result.model)
    write_history_csv(out.file("loss.csv"), result.history)
    if (data / "test.jsonl").exists():
        proposals = predict(result.model, _load_split(data, "test"), cfg.act_threshold)
        write_proposals(out.file("proposals.jsonl"), proposals)
    if result.history:
        first, last = result.history[0][3], result.history[-1][3]
        print(f"trained {cfg.train.epochs} epochs, total loss {first:.4f} -> {last:.4f}")
    return 0


def cmd_enhance(args, out: OutputDir) -> int:
    model = load_model(Path(args.model) / "model.npz" if Path(args.model).is_dir() else args.model)
    if model.raw:
        raise UsageError("the saved model was trained on raw features and has no graph to apply")
    inputs = sorted(Path(args.data).glob("*.acgf")) if Path(args.data).is_dir() else [Path(args.data)]
    if not inputs:
        raise UsageError(f"no .acgf feature files found in {args.data}")
    for path in inputs:
        enhanced, sparse = model.enhance(read_feature_file(path))
        write_feature_file(out.file(path.name), enhanced)
        save_sparse_adjacency(out.file(path.stem + ".adj.npz"), sparse)
    print(f"enhanced {len(inputs)} feature files into {out.path}")
    return 0


def cmd_eval(args, out: OutputDir) -> int:
    cfg = _run_config(args)
    proposals = read_proposals(args.proposals)
    gts = [g for a in read_annotations(args.annotations) for g in (a.instances or [])]
    result = mean_ap(proposals, gts, cfg.iou_thresholds)
    write_map_csv(out.file("maps.csv"), result)
    for thr, value in result["map"].items():
        print(f"mAP@{thr:.2f} = {value:.4f}")
    print(f"average = {result['average']:.4f}")
    return 0


def cmd_gradcheck(args, out: Optional[OutputDir]) -> int:
    report = gc.run_suite(args.seed if args.seed is not None else 0, args.instances)
    lines = report.lines()
    print("\n".join(lines))
    if out is not None:
        out.file("gradcheck.txt").write_text("\n".join(lines) + "\n")
    return 0 if report.passed else 1


def cmd_ablate(args, out: OutputDir) -> int:
    cfg = _run_config(args)
    out.file("config.cfg").write_text(dump_run_config(cfg))
    settings = ablation_settings(cfg.graph, cfg.synth.T)
    if args.group:
        settings = [s for s in settings if s.group in args.group]

    def progress(s, maps):
        log.info("%-8s %-26s mAP@mid %.4f average %.4f", s.group, s.name,
                 list(maps["map"].values())[len(maps["map"]) // 2], maps["average"])

    rows = run_ablation(cfg, settings, progress)
    write_ablation_csv(out.file("ablate.csv"), rows, cfg.iou_thresholds, cfg.seed)
    print(f"wrote {len(rows)} settings to {out.path / 'ablate.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="acgnet", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="command")

    def common(p, out_required=True, config=True):
        if config:
            p.add_argument("--config", help="key=value run configuration file")
            p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", required=out_required, help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    common(p)
    p = sub.add_parser("train", help="train ACGNet and the head on a corpus")
    common(p)
    p.add_argument("--data", required=True, help="directory written by 'synth'")
    p.add_argument("--fusion", choices=("sum", "concat"))
    p.add_argument("--no-epm", action="store_true", help="train without the EPM loss")
    p.add_argument("--raw", action="store_true", help="train the head on raw features only")
    p = sub.add_parser("enhance", help="write enhanced features with a trained model")
    common(p, config=False)
    p.add_argument("--model", required=True, help="model.npz or the train output directory")
    p.add_argument("--data", required=True, help="a .acgf file or a directory of them")
    p = sub.add_parser("eval", help="score proposals against annotations")
    common(p)
    p.add_argument("--proposals", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--iou", help="comma-separated IoU thresholds")
    p = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    common(p, out_required=False, config=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=20)
    p = sub.add_parser("ablate", help="graph and fusion ablation sweep")
    common(p)
    p.add_argument("--iou", help="comma-separated IoU thresholds")
    p.add_argument("--fusion", choices=("sum", "concat"))
    p.add_argument("--group", action="append", choices=("lambda", "K", "variant", "fusion"),
                   help="restrict the sweep to these groups (repeatable)")
    return parser


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "enhance": cmd_enhance, "eval": cmd_eval,
            "gradcheck": cmd_gradcheck, "ablate": cmd_ablate}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("acgnet: error: a command is required", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = COMMANDS[args.command]
    try:
        if args.out is None:
            return handler(args, None)
        with OutputDir(args.out) as out:
            return handler(args, out)
    except (UsageError, FormatError, InvalidInputError, ValueError, OSError) as exc:
        print(f"acgnet {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
