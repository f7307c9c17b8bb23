"""Command-line entry points: generate / train / eval / ablate.

Every command is deterministic given its flags.  Exit codes: 0 success,
1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import dataio, model as mdl, trainer
from .errors import SnipalignError


@dataclass
class RunManifest:
    """Everything a run resolved before starting: config, data, outputs."""

    config: trainer.TrainConfig
    dataset_paths: dict[str, str]
    seeds: list[int]
    out_dir: str


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# generate


def _add_generate(sub):
    p = sub.add_parser("generate", help="write a synthetic benchmark to disk")
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--source-videos", type=int, default=800)
    p.add_argument("--k-shot", type=int, default=5)
    p.add_argument("--test-videos", type=int, default=400)
    p.add_argument("--frames", type=int, default=40)
    p.add_argument("--rotation", type=float, default=0.8)
    p.add_argument("--bias", type=float, default=0.3)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    return p


def cmd_generate(args, parser) -> int:
    if args.k_shot < 1:
        parser.error("--k-shot must be >= 1")
    if args.classes < 1 or args.dim < 2:
        parser.error("--classes must be >= 1 and --dim >= 2")
    if args.source_videos < 1 or args.test_videos < 1 or args.frames < 1:
        parser.error("video counts and --frames must be >= 1")
    shift = dataio.ShiftSpec(rotation_angle=args.rotation,
                             bias_scale=args.bias, noise_std=args.noise,
                             seed=args.seed)
    source, target_train, target_test = dataio.generate_synthetic_benchmark(
        args.classes, args.dim, args.source_videos, args.k_shot,
        args.test_videos, args.frames, shift)
    out = Path(args.out)
    for ds in (source, target_train, target_test):
        manifest = dataio.write_manifest(ds, out / ds.name)
        print(f"{ds.name}: {len(ds.videos)} videos -> {manifest}")
    print(f"classes={args.classes} dim={args.dim} k_shot={args.k_shot} "
          f"frames={args.frames} rotation={args.rotation} bias={args.bias} "
          f"noise={args.noise} seed={args.seed}")
    return 0


# ---------------------------------------------------------------------------
# train


def _add_train_flags(p):
    p.add_argument("--lambda-sem", type=float, default=1.0)
    p.add_argument("--lambda-stat", type=float, default=1.0)
    p.add_argument("--lambda-p", type=float, default=0.6)
    p.add_argument("--alpha-v", type=float, default=0.3)
    p.add_argument("--m", type=int, default=8)
    p.add_argument("--mhat", type=int, default=None)
    p.add_argument("--r", type=int, default=3)
    p.add_argument("--e-warmup", type=int, default=5)
    p.add_argument("--stat-metric", choices=("mmd", "coral", "none"),
                   default="mmd")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.005)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--batch-source", type=int, default=12)
    p.add_argument("--batch-target", type=int, default=4)
    p.add_argument("--hidden-dim", type=int, default=64)
    p.add_argument("--embed-dim", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-ssa", action="store_true")
    p.add_argument("--no-attention", action="store_true")
    p.add_argument("--no-proto", action="store_true")
    p.add_argument("--no-cross", action="store_true")
    p.add_argument("--no-sn-dist", action="store_true")


def _add_train(sub):
    p = sub.add_parser("train", help="train on source + few-shot target")
    p.add_argument("--source", required=True, help="source manifest")
    p.add_argument("--target-train", required=True)
    p.add_argument("--target-test", required=True)
    p.add_argument("--out", required=True, help="output directory")
    _add_train_flags(p)
    return p


def config_from_args(args) -> trainer.TrainConfig:
    return trainer.TrainConfig(
        epochs=args.epochs, lr=args.lr, momentum=args.momentum,
        weight_decay=args.weight_decay, lambda_sem=args.lambda_sem,
        lambda_stat=args.lambda_stat, lambda_p=args.lambda_p,
        alpha_v=args.alpha_v, m=args.m, m_hat=args.mhat, r=args.r,
        e_warmup=args.e_warmup,
        stat_metric=args.stat_metric if args.stat_metric != "none" else "mmd",
        batch_source=args.batch_source, batch_target=args.batch_target,
        hidden_dim=args.hidden_dim, embed_dim=args.embed_dim, seed=args.seed,
        enable_proto=not args.no_proto, enable_cross=not args.no_cross,
        enable_sn_dist=not args.no_sn_dist,
        enable_sn_stat=args.stat_metric != "none",
        enable_attention=not args.no_attention, enable_ssa=not args.no_ssa)


def _metrics_doc(config, dataset_paths, log, summary_extra=None):
    epochs = [{
        "epoch": rec.epoch, "l_pred": rec.l_pred, "l_proto": rec.l_proto,
        "l_cross": rec.l_cross, "l_sn_dist": rec.l_sn_dist,
        "l_sn_stat": rec.l_sn_stat, "total": rec.total,
        "target_test_top1": rec.test_accuracy,
    } for rec in log.records]
    summary = {
        "epochs_trained": len(log.records),
        "final_target_test_top1":
            log.records[-1].test_accuracy if log.records else None,
        "best_target_test_top1":
            max((r.test_accuracy for r in log.records), default=None),
    }
    if summary_extra:
        summary.update(summary_extra)
    return {"config": asdict(config), "datasets": dataset_paths,
            "epochs": epochs, "summary": summary}


def cmd_train(args, parser) -> int:
    source = dataio.load_manifest(args.source)
    target_train = dataio.load_manifest(args.target_train)
    target_test = dataio.load_manifest(args.target_test)
    config = config_from_args(args)
    trainer.validate_config(config, source, target_train)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params, log = trainer.train(source, target_train, target_test, config)
    mdl.save_params(params, out / "checkpoint.fsvm")
    (out / "train_log.txt").write_text(log.to_text())
    paths = {"source": str(args.source), "target_train": str(args.target_train),
             "target_test": str(args.target_test)}
    _write_json(out / "metrics.json", _metrics_doc(config, paths, log))
    final = log.records[-1].test_accuracy if log.records else float("nan")
    print(f"final target top-1: {final}")
    return 0


# ---------------------------------------------------------------------------
# eval


def _add_eval(sub):
    p = sub.add_parser("eval", help="top-1 accuracy of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=None, help="optional metrics json path")
    return p


def cmd_eval(args, parser) -> int:
    params = mdl.load_params(args.checkpoint)
    dataset = dataio.load_manifest(args.manifest)
    if params.feature_dim != dataset.feature_dim:
        raise SnipalignError(
            f"checkpoint feature dim {params.feature_dim} != dataset "
            f"{dataset.feature_dim}")
    if params.num_classes != dataset.num_classes:
        raise SnipalignError(
            f"checkpoint classes {params.num_classes} != dataset "
            f"{dataset.num_classes}")
    accuracy = mdl.top1_accuracy(params, dataset, params.m)
    print(f"top1_accuracy: {accuracy}")
    if args.out:
        _write_json(args.out, {"checkpoint": str(args.checkpoint),
                               "manifest": str(args.manifest),
                               "top1_accuracy": accuracy})
    return 0


# ---------------------------------------------------------------------------
# ablate

ABLATION_ROWS = {
    "full": {},
    "no-ssa": {"enable_ssa": False},
    "no-attention": {"enable_attention": False},
    "lpred-only": {"enable_proto": False, "enable_cross": False,
                   "enable_sn_dist": False, "enable_sn_stat": False,
                   "enable_attention": False},
}


def _add_ablate(sub):
    p = sub.add_parser("ablate", help="toggle-grid comparison table")
    p.add_argument("--source", required=True)
    p.add_argument("--target-train", required=True)
    p.add_argument("--target-test", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rows", default="full,no-ssa,lpred-only,no-attention",
                   help="comma-separated subset of "
                        + ",".join(ABLATION_ROWS))
    p.add_argument("--seeds", default="0",
                   help="comma-separated seed list")
    _add_train_flags(p)
    return p


def cmd_ablate(args, parser) -> int:
    names = [s.strip() for s in args.rows.split(",") if s.strip()]
    for name in names:
        if name not in ABLATION_ROWS:
            parser.error(f"unknown ablation row '{name}'")
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError:
        parser.error("--seeds must be a comma-separated list of integers")
    if not seeds:
        parser.error("--seeds must name at least one seed")
    source = dataio.load_manifest(args.source)
    target_train = dataio.load_manifest(args.target_train)
    target_test = dataio.load_manifest(args.target_test)
    base = config_from_args(args)
    grid = [(name, replace(base, **ABLATION_ROWS[name])) for name in names]
    for name, config in grid:
        trainer.validate_config(config, source, target_train)
    rows = trainer.run_ablation(source, target_train, target_test, grid,
                                seeds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"seeds": seeds, "config": asdict(base),
           "rows": [{"name": r.name, "accuracies": r.accuracies,
                     "mean_accuracy": r.mean_accuracy} for r in rows]}
    _write_json(out / "ablation.json", doc)
    width = max(len(r.name) for r in rows)
    print(f"{'variant'.ljust(width)}  mean_top1  per-seed")
    for r in rows:
        per_seed = " ".join(f"{a:.4f}" for a in r.accuracies)
        print(f"{r.name.ljust(width)}  {r.mean_accuracy:.4f}     {per_seed}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="snipalign",
        description="few-shot video domain adaptation over precomputed "
                    "frame features")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_generate(sub)
    _add_train(sub)
    _add_eval(sub)
    _add_ablate(sub)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"generate": cmd_generate, "train": cmd_train,
                "eval": cmd_eval, "ablate": cmd_ablate}
    try:
        return handlers[args.command](args, parser)
    except (SnipalignError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
