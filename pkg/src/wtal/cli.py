"""Command-line entry point: gen-data, train, localize, eval, plot.

Exit codes: 0 success, 1 usage error, 2 data/config error, 3 numeric
failure during training.
"""

import argparse
import csv
import dataclasses
import json
import os
import sys

from . import basemodel, evaluation, localization, pipeline, synthdata
from .basemodel import ModelConfig
from .consensus import NumericError, RefinementConfig, run_refinement
from .localization import LocalizationConfig
from .losses import LossConfig
from .synthdata import DataError, GeneratorConfig

DEFAULT_THRESHOLDS = [round(0.1 * i, 1) for i in range(1, 10)]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclasses.dataclass
class RunConfig:
    """Resolved run configuration; every field has a default."""

    seed: int = 0
    dataset: str = "data"
    output_dir: str = "runs/default"
    generator: dict = dataclasses.field(default_factory=dict)
    model: dict = dataclasses.field(default_factory=dict)
    loss: dict = dataclasses.field(default_factory=dict)
    refinement: dict = dataclasses.field(default_factory=dict)
    localization: dict = dataclasses.field(default_factory=dict)
    evaluation: dict = dataclasses.field(
        default_factory=lambda: {"thresholds": DEFAULT_THRESHOLDS})


def _check_section(name, values, config_cls):
    known = {f.name for f in dataclasses.fields(config_cls)}
    for key in values:
        if key not in known:
            raise DataError(f"config section {name!r}: unknown field "
                            f"{key!r} (expected one of {sorted(known)})")


def load_run_config(path=None, overrides=None):
    cfg = RunConfig()
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError as exc:
            raise DataError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise DataError(
                f"{path}: invalid JSON at line {exc.lineno}, column "
                f"{exc.colno}: {exc.msg}") from exc
        known = {f.name for f in dataclasses.fields(RunConfig)}
        for key, value in raw.items():
            if key not in known:
                raise DataError(f"{path}: unknown config field {key!r}")
            setattr(cfg, key, value)
    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, key, value)
    _check_section("generator", cfg.generator, GeneratorConfig)
    _check_section("loss", cfg.loss, LossConfig)
    _check_section("refinement", cfg.refinement, RefinementConfig)
    _check_section("localization", cfg.localization, LocalizationConfig)
    return cfg


def resolved_config(cfg, dataset):
    model_cfg = ModelConfig(feature_dim=dataset.feature_dim,
                            num_classes=dataset.num_classes, **cfg.model)
    return (model_cfg,
            LossConfig(**cfg.loss),
            RefinementConfig(**cfg.refinement),
            LocalizationConfig(**cfg.localization))


def write_resolved_config(cfg, path):
    payload = dataclasses.asdict(cfg)
    # fill in effective section defaults so the emitted file is complete
    for name, cls in (("generator", GeneratorConfig), ("loss", LossConfig),
                      ("refinement", RefinementConfig),
                      ("localization", LocalizationConfig)):
        merged = {f.name: f.default for f in dataclasses.fields(cls)
                  if f.default is not dataclasses.MISSING}
        merged.update(payload[name])
        payload[name] = merged
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands

def cmd_gen_data(args):
    fields = {
        "num_train": args.videos,
        "num_test": args.test_videos,
        "num_classes": args.classes,
        "feature_dim": args.dim,
        "seed": args.seed,
    }
    if args.confounder_rate is not None:
        fields["rgb_false_positive_rate"] = args.confounder_rate
    if args.flow_miss_rate is not None:
        fields["flow_miss_rate"] = args.flow_miss_rate
    config = GeneratorConfig(**fields)
    dataset = synthdata.generate(config)
    synthdata.save(dataset, args.out)
    n_gt = sum(len(v.gt_segments) for v in dataset.all_videos())
    print(f"wrote {len(dataset.train)} train / {len(dataset.test)} test "
          f"videos, {dataset.num_classes} classes, "
          f"{n_gt} ground-truth segments -> {args.out}")
    return 0


def _write_log_csv(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "epoch", "stream", "mean_cls_loss",
                         "mean_att_loss", "mean_gt_loss",
                         "mean_total_loss"])
        for r in rows:
            writer.writerow([r.iteration, r.epoch, r.stream,
                             repr(r.mean_cls_loss), repr(r.mean_att_loss),
                             "" if r.mean_gt_loss is None
                             else repr(r.mean_gt_loss),
                             repr(r.mean_total_loss)])


def cmd_train(args):
    cfg = load_run_config(args.config, {"dataset": args.dataset,
                                        "output_dir": args.out,
                                        "seed": args.seed})
    dataset = synthdata.load(cfg.dataset)
    model_cfg, loss_cfg, refine_cfg, _ = resolved_config(cfg, dataset)
    os.makedirs(cfg.output_dir, exist_ok=True)
    write_resolved_config(cfg, os.path.join(cfg.output_dir,
                                            "resolved_config.json"))
    result = run_refinement(dataset.train, model_cfg, loss_cfg, refine_cfg,
                            cfg.seed)
    for iteration, snapshot in enumerate(result.checkpoints):
        for stream, model in snapshot.items():
            meta = dict(result.checkpoint_meta[iteration][stream])
            meta.update({"iteration": iteration, "seed": cfg.seed})
            basemodel.save_checkpoint(
                os.path.join(cfg.output_dir,
                             f"iter{iteration}_{stream}.ckpt"),
                model, meta=meta)
    _write_log_csv(os.path.join(cfg.output_dir, "training_log.csv"),
                   result.log_rows)
    if args.dump_pseudo_gt:
        for iteration, pseudo in enumerate(result.pseudo_gt):
            if pseudo is None:
                continue
            pdir = os.path.join(cfg.output_dir, "pseudo_gt",
                                f"iter{iteration}")
            os.makedirs(pdir, exist_ok=True)
            for vid, gt in sorted(pseudo.items()):
                with open(os.path.join(pdir, f"{vid}.csv"), "w",
                          newline="", encoding="utf-8") as fh:
                    writer = csv.writer(fh)
                    writer.writerow(["snippet", "pseudo_gt"])
                    for i, value in enumerate(gt.values, start=1):
                        writer.writerow([i, repr(float(value))])
    n_ckpt = 2 * len(result.checkpoints)
    print(f"trained {refine_cfg.iterations + 1} iterations, wrote "
          f"{n_ckpt} checkpoints and training_log.csv -> {cfg.output_dir}")
    return 0


def _load_stream_models(rgb_path, flow_path, dataset):
    models = {}
    for stream, path in (("rgb", rgb_path), ("flow", flow_path)):
        model, _ = basemodel.load_checkpoint(path)
        if model.modality != stream:
            raise DataError(f"{path}: checkpoint modality is "
                            f"{model.modality!r}, expected {stream!r}")
        if (model.config.feature_dim != dataset.feature_dim
                or model.config.num_classes != dataset.num_classes):
            raise DataError(f"{path}: checkpoint shape does not match "
                            "the dataset")
        models[stream] = model
    return models


def cmd_localize(args):
    cfg = load_run_config(args.config)
    dataset = synthdata.load(args.dataset)
    _, _, _, loc_cfg = resolved_config(cfg, dataset)
    models = _load_stream_models(args.checkpoint_rgb, args.checkpoint_flow,
                                 dataset)
    videos = dataset.test if args.split == "test" else dataset.train
    proposals = pipeline.localize_dataset(models, videos, loc_cfg,
                                          mode=args.mode)
    localization.save_proposals(args.out, proposals, dataset.class_names)
    print(f"wrote {len(proposals)} proposals -> {args.out}")
    return 0


def cmd_eval(args):
    cfg = load_run_config(args.config)
    dataset = synthdata.load(args.dataset)
    videos = dataset.test if args.split == "test" else dataset.train
    if any(v.gt_segments is None for v in videos):
        raise DataError("dataset has videos without ground truth; "
                        "cannot evaluate")
    proposals = localization.load_proposals(args.proposals,
                                            dataset.class_names)
    gts = evaluation.gt_from_videos(videos)
    thresholds = cfg.evaluation.get("thresholds", DEFAULT_THRESHOLDS)
    report = evaluation.evaluate(proposals, gts, thresholds,
                                 dataset.num_classes)
    base = args.out
    evaluation.save_report(base + ".json", base + ".txt", report)
    sys.stdout.write(report.to_text())
    return 0


def cmd_plot(args):
    cfg = load_run_config(args.config)
    dataset = synthdata.load(args.dataset)
    _, _, _, loc_cfg = resolved_config(cfg, dataset)
    models = _load_stream_models(args.checkpoint_rgb, args.checkpoint_flow,
                                 dataset)
    videos = dataset.test if args.split == "test" else dataset.train
    pseudo = None
    if args.pseudo_gt_dir:
        pseudo = {}
        for video in videos:
            path = os.path.join(args.pseudo_gt_dir, f"{video.id}.csv")
            if os.path.exists(path):
                with open(path, newline="", encoding="utf-8") as fh:
                    rows = list(csv.DictReader(fh))
                pseudo[video.id] = [float(r["pseudo_gt"]) for r in rows]
    pipeline.write_plot_bundle(args.out, models, videos, loc_cfg,
                               pseudo_by_video=pseudo)
    print(f"wrote plot data for {len(videos)} videos -> {args.out}")
    return 0


# ---------------------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="wtal",
                     description="weakly-supervised temporal action "
                                 "localization on synthetic two-stream data")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--videos", type=int, default=60,
                   help="number of training videos")
    p.add_argument("--test-videos", type=int, default=30)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--confounder-rate", type=float, default=None)
    p.add_argument("--flow-miss-rate", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="run iterative refinement training")
    p.add_argument("--config", default=None)
    p.add_argument("--dataset", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--dump-pseudo-gt", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("localize", help="emit scored action proposals")
    p.add_argument("--config", default=None)
    p.add_argument("--checkpoint-rgb", required=True)
    p.add_argument("--checkpoint-flow", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--mode", choices=("fused", "rgb", "flow"),
                   default="fused")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("eval", help="score proposals against ground truth")
    p.add_argument("--config", default=None)
    p.add_argument("--proposals", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--out", required=True,
                   help="output basename (.json and .txt are appended)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="emit attention CSV + SVG per video")
    p.add_argument("--config", default=None)
    p.add_argument("--checkpoint-rgb", required=True)
    p.add_argument("--checkpoint-flow", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--pseudo-gt-dir", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (DataError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
