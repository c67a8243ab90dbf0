"""Pose-conditioned human video synthesis: data preparation, two-stage GAN training, inference and metrics."""
from .pose_core import BODY15, PoseSkeleton, SkeletonTopology, parse_keypoints, rasterize_pose_map
from .trainer import ABLATIONS, Checkpoint, TrainConfig, load_checkpoint, train_stage1, train_stage2

__version__ = "0.1.0"

__all__ = [
    "ABLATIONS", "BODY15", "Checkpoint", "PoseSkeleton", "SkeletonTopology", "TrainConfig",
    "load_checkpoint", "parse_keypoints", "rasterize_pose_map", "train_stage1", "train_stage2",
]
