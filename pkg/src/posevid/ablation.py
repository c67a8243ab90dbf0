"""The five-row ablation ladder: train each configuration and score it on perturbed validation poses."""
from __future__ import annotations

import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from .augment import AugmentConfig, augment_pose
from .datapipe import PoseVideoDataset
from .infer_compose import generate_sequence
from .metrics import MetricsReport, evaluate_frames, write_ablation_report
from .trainer import ABLATIONS, Checkpoint, TrainConfig, ablation_config, train_stage1, train_stage2

log = logging.getLogger(__name__)

# validation perturbation: heavier than the training augmentation so the rows separate
VAL_PERTURBATION = AugmentConfig(drop_prob=0.15, jitter_sigma=None, limb_scale_range=(0.9, 1.1))


def perturbed_validation(dataset: PoseVideoDataset, seed: int, perturbation: AugmentConfig = VAL_PERTURBATION):
    """Jittered / dropped-part copies of the validation skeletons with their ground-truth frames."""
    if not dataset.val:
        raise ValueError("dataset has no validation split")
    skeletons, frames = [], []
    for ci, clip in enumerate(dataset.val):
        for i, s in enumerate(clip.skeletons):
            skeletons.append(augment_pose(s, dataset.topology, perturbation, (seed, ci, i)))
        frames.append(clip.frames)
    return skeletons, np.concatenate(frames)


def _stage1_key(config: TrainConfig) -> tuple:
    return (config.data_aug, config.future_frames, config.unpaired)


def run_ablation(dataset: PoseVideoDataset, base: TrainConfig, seed: int = 0, out_dir=None,
                 rows=tuple(ABLATIONS), perturbation: AugmentConfig = VAL_PERTURBATION,
                 progress=None) -> dict[str, MetricsReport]:
    """Train and evaluate each row. Rows whose stage-1 settings coincide share one stage-1 run."""
    val_skeletons, val_frames = perturbed_validation(dataset, seed, perturbation)
    stage1_runs: dict[tuple, Checkpoint] = {}
    reports: dict[str, MetricsReport] = {}
    for name in rows:
        config = ablation_config(name, base)
        row_dir = Path(out_dir) / name if out_dir else None
        key = _stage1_key(config)
        if key not in stage1_runs:
            log.info("ablation %s: stage 1", name)
            stage1_runs[key] = train_stage1(config, dataset, seed, out_dir=row_dir, progress=progress)
        c1 = stage1_runs[key]
        c2 = None
        if config.stage2:
            log.info("ablation %s: stage 2", name)
            c2 = train_stage2(config, dataset, c1, seed, out_dir=row_dir, progress=progress)
        generated = generate_sequence(val_skeletons, c1, c2)
        reports[name] = evaluate_frames(generated, val_frames)
        if row_dir:
            reports[name].write_csv(row_dir / "metrics.csv")
    if out_dir:
        write_ablation_report(reports, Path(out_dir) / "ablation.csv")
    return reports
