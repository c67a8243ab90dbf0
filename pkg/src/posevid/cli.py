"""Command-line entry points: prepare, train, infer, eval, ablate.

Errors go to stderr as one JSON line ``{"error": <type>, "message": <text>}``; exit code 2 for
usage errors, 1 for everything else.
"""
from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path

import torch

log = logging.getLogger("posevid")


class UsageError(Exception):
    pass


def _resolution(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"resolution must look like 64x64, got {text!r}")
    return h, w


def _ratio(text: str) -> tuple[int, int]:
    try:
        a, b = (int(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"split must look like 17:3, got {text!r}")
    if a <= 0 or b < 0:
        raise argparse.ArgumentTypeError("split parts must be positive")
    return a, b


# ---------------------------------------------------------------- prepare

def cmd_prepare(args) -> int:
    from .datapipe import (
        DatasetManifest,
        PairedClipEntry,
        UnpairedClipEntry,
        prepare_paired_clip,
        split_frames,
        write_synthetic_corpus,
    )

    out = Path(args.out)
    manifest_path = out / "manifest.json"
    if manifest_path.exists() and not args.force:
        raise UsageError(f"{manifest_path} exists; pass --force to overwrite")
    if args.synthetic is None and (args.frames is None or args.keypoints is None):
        raise UsageError("prepare needs --frames and --keypoints, or --synthetic N")
    if args.force and (out / "cache").exists():
        shutil.rmtree(out / "cache")
    out.mkdir(parents=True, exist_ok=True)
    wild = [Path(p) for p in args.wild]
    if args.synthetic is not None:
        if args.synthetic < 2:
            raise UsageError("--synthetic needs at least 2 frames")
        src = write_synthetic_corpus(out / "raw", args.seed, args.synthetic, num_unpaired=args.synthetic_wild)
        frames_dir, keypoints = src["frames_dir"], src["keypoints_file"]
        wild += src["wild"]
    else:
        frames_dir, keypoints = Path(args.frames), Path(args.keypoints)
        for p in (frames_dir, keypoints, *wild):
            if not p.exists():
                raise UsageError(f"missing input: {p}")
    clip = prepare_paired_clip(frames_dir, keypoints, out_resolution=args.resolution,
                               threshold=args.key_threshold, chroma_key=not args.no_chroma_key)
    cache = out / "cache" / "clip_000.npz"
    clip.save(cache)
    tr, va = split_frames(len(clip), args.split)

    def rel(p):
        p = Path(p).resolve()
        try:
            return str(p.relative_to(out.resolve()))
        except ValueError:
            return str(p)

    entries = [PairedClipEntry(rel(frames_dir), rel(keypoints), "train", (tr.start, tr.stop), rel(cache))]
    if len(va):
        entries.append(PairedClipEntry(rel(frames_dir), rel(keypoints), "val", (va.start, va.stop), rel(cache)))
    manifest = DatasetManifest(entries, [UnpairedClipEntry(rel(p)) for p in wild], resolution=args.resolution,
                               split_ratio=args.split)
    manifest.save(manifest_path)
    print(json.dumps({"manifest": str(manifest_path), "train_frames": len(tr), "val_frames": len(va),
                      "unpaired_clips": len(wild)}))
    return 0


# ---------------------------------------------------------------- train

def _train_config(args):
    from .trainer import TrainConfig, ablation_config

    config = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    if args.ablation:
        config = ablation_config(args.ablation, config)
    overrides = {k: v for k, v in dict(steps=args.steps, stage2_steps=args.stage2_steps, K=args.K,
                                       batch_size=args.batch_size, lr_initial=args.lr,
                                       checkpoint_every=args.checkpoint_every).items() if v is not None}
    return config.with_overrides(**overrides)


def _load_dataset(path):
    from .datapipe import DatasetManifest, PoseVideoDataset

    if not Path(path).exists():
        raise UsageError(f"manifest not found: {path}")
    return PoseVideoDataset.from_manifest(DatasetManifest.load(path))


def cmd_train(args) -> int:
    from .trainer import load_checkpoint, train_stage1, train_stage2, write_loss_csv

    config = _train_config(args)
    out = Path(args.out)
    stages = [1, 2] if args.stage == "all" else [int(args.stage)]
    if 2 in stages and not config.stage2:
        if args.stage == "all":
            stages = [1]
        else:
            raise UsageError("stage 2 requested but the stage2 flag is off in this config")
    stage1_ckpt = None
    if stages == [2]:
        src = Path(args.stage1_ckpt) if args.stage1_ckpt else out / "stage1"
        if not src.exists() or (src.is_dir() and not (src / "latest").exists()):
            raise UsageError(f"stage 2 needs a stage-1 checkpoint; none found at {src}")
        stage1_ckpt = load_checkpoint(src)
    dataset = _load_dataset(args.data)
    out.mkdir(parents=True, exist_ok=True)
    config.save(out / "config.json")
    summary = {}
    for stage in stages:
        resume = None
        if args.resume and (out / f"stage{stage}" / "latest").exists():
            resume = load_checkpoint(out / f"stage{stage}")
        if stage == 1:
            stage1_ckpt = train_stage1(config, dataset, args.seed, out_dir=out, resume=resume)
            ckpt = stage1_ckpt
        else:
            ckpt = train_stage2(config, dataset, stage1_ckpt, args.seed, out_dir=out, resume=resume)
        summary[f"stage{stage}"] = {"step": ckpt.step, "losses": str(out / f"stage{stage}" / "losses.csv")}
    print(json.dumps(summary))
    return 0


# ---------------------------------------------------------------- infer / eval / ablate

def cmd_infer(args) -> int:
    from .datapipe import read_frame
    from .infer_compose import generate_video
    from .trainer import load_checkpoint

    run = Path(args.run)
    stage1 = load_checkpoint(args.stage1_ckpt or run / "stage1")
    stage2 = None
    if not args.no_stage2:
        s2 = Path(args.stage2_ckpt) if args.stage2_ckpt else run / "stage2"
        if s2.exists() and (s2.is_file() or (s2 / "latest").exists()):
            stage2 = load_checkpoint(s2)
    if not Path(args.keypoints).exists():
        raise UsageError(f"keypoint file not found: {args.keypoints}")
    background = None
    if args.background:
        if not Path(args.background).exists():
            raise UsageError(f"background image not found: {args.background}")
        background = read_frame(args.background)
    paths = generate_video(args.keypoints, stage1, stage2, args.out, background=background,
                           normalize=not args.no_normalize)
    print(json.dumps({"frames": len(paths), "out": str(args.out), "stage2": stage2 is not None,
                      "composited": background is not None}))
    return 0


def cmd_eval(args) -> int:
    from .metrics import evaluate_run

    for d in (args.generated, args.reference):
        if not Path(d).is_dir():
            raise UsageError(f"not a directory: {d}")
    out = args.out or Path(args.generated) / "metrics.csv"
    report = evaluate_run(args.generated, args.reference, out)
    print(json.dumps({"csv": str(out), **report.summary()}))
    return 0


def cmd_ablate(args) -> int:
    from .ablation import run_ablation

    config = _train_config(args)
    dataset = _load_dataset(args.data)
    reports = run_ablation(dataset, config, args.seed, args.out)
    print(json.dumps({"report": str(Path(args.out) / "ablation.csv"),
                      "rows": {k: r.summary() for k, r in reports.items()}}))
    return 0


# ---------------------------------------------------------------- parser

def _add_train_flags(p):
    from .trainer import ABLATIONS

    p.add_argument("--data", required=True, help="dataset manifest written by 'prepare'")
    p.add_argument("--out", required=True, help="run directory (stage1/, stage2/, config.json)")
    p.add_argument("--config", help="JSON run config; flags below override it")
    p.add_argument("--ablation", choices=list(ABLATIONS), help="ablation row preset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, help="stage-1 paired steps")
    p.add_argument("--stage2-steps", type=int, help="stage-2 paired steps")
    p.add_argument("--K", type=int, help="temporal half-window")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float, help="initial learning rate")
    p.add_argument("--checkpoint-every", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="posevid", description="Pose-to-video motion transfer toolkit.")
    parser.add_argument("--workers", type=int, default=1, help="torch intra-op threads")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build a dataset manifest and processed clip cache")
    p.add_argument("--out", required=True, help="dataset directory")
    p.add_argument("--frames", help="directory of PNG frames of the recorded subject")
    p.add_argument("--keypoints", help="keypoint JSON aligned with --frames")
    p.add_argument("--wild", nargs="*", default=[], help="keypoint JSON files without video (unpaired)")
    p.add_argument("--synthetic", type=int, metavar="N", help="generate an N-frame stick-figure corpus instead")
    p.add_argument("--synthetic-wild", type=int, default=4, help="wild clips generated with --synthetic")
    p.add_argument("--split", type=_ratio, default=(17, 3), help="train:val duration ratio")
    p.add_argument("--resolution", type=_resolution, default=(64, 64), help="HxW")
    p.add_argument("--key-threshold", type=float, default=0.3)
    p.add_argument("--no-chroma-key", action="store_true", help="frames are already on a green backdrop")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true", help="overwrite an existing manifest")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train stage 1, stage 2, or both")
    _add_train_flags(p)
    p.add_argument("--stage", choices=["1", "2", "all"], default="all")
    p.add_argument("--stage1-ckpt", help="stage-1 checkpoint file or directory (default: <out>/stage1)")
    p.add_argument("--resume", action="store_true", help="continue from <out>/stageN/latest")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="render frames from a keypoint file")
    p.add_argument("--keypoints", required=True)
    p.add_argument("--run", default=".", help="run directory holding stage1/ and optionally stage2/")
    p.add_argument("--stage1-ckpt")
    p.add_argument("--stage2-ckpt")
    p.add_argument("--no-stage2", action="store_true")
    p.add_argument("--no-normalize", action="store_true", help="skip torso-length/anchor normalization")
    p.add_argument("--background", help="image to composite the generated subject onto")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="SSIM, perceptual distance and FID between two frame directories")
    p.add_argument("--generated", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--out", help="CSV path (default: <generated>/metrics.csv)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and score all five ablation rows")
    _add_train_flags(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message.replace("\n", " ")}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed usage; keep its exit code for --help
        if exc.code in (0, None):
            return 0
        return _fail("UsageError", "invalid arguments (see --help)", 2)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    torch.set_num_threads(max(1, args.workers))
    try:
        return args.func(args)
    except UsageError as exc:
        return _fail("UsageError", str(exc), 2)
    except Exception as exc:
        if args.verbose:
            log.exception("command failed")
        return _fail(type(exc).__name__, str(exc), 1)


if __name__ == "__main__":
    sys.exit(main())
