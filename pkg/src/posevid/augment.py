"""Pose augmentation that mimics detector failures: missing parts, joint jitter, limb length changes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pose_core import PoseSkeleton, SkeletonTopology


@dataclass(frozen=True)
class AugmentConfig:
    enabled: bool = True
    drop_prob: float = 0.05
    # std of the per-axis joint offset in pixels; None means 1.5% of the skeleton canvas height
    jitter_sigma: float | None = None
    limb_scale_range: tuple[float, float] = (0.8, 1.25)

    def __post_init__(self):
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ValueError("drop_prob must be in [0, 1]")
        if self.jitter_sigma is not None and self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")
        lo, hi = self.limb_scale_range
        if not 0 < lo <= hi:
            raise ValueError("limb_scale_range must satisfy 0 < lo <= hi")
        object.__setattr__(self, "limb_scale_range", (float(lo), float(hi)))

    def sigma_for(self, skeleton: PoseSkeleton) -> float:
        if self.jitter_sigma is not None:
            return float(self.jitter_sigma)
        if skeleton.canvas is None:
            return 0.0
        return 0.015 * skeleton.canvas[0]

    @classmethod
    def identity(cls) -> AugmentConfig:
        return cls(enabled=True, drop_prob=0.0, jitter_sigma=0.0, limb_scale_range=(1.0, 1.0))


def drop_parts(skeleton: PoseSkeleton, topology: SkeletonTopology, drop_prob: float, rng_seed) -> PoseSkeleton:
    skeleton.check(topology)
    rng = np.random.default_rng(rng_seed)
    dropped = rng.random(topology.n_parts) < drop_prob
    if not dropped.any():
        return skeleton.copy()
    out = skeleton.copy(dropped_parts=skeleton.dropped_parts | {int(i) for i in np.flatnonzero(dropped)})
    owners: dict[int, list[int]] = {}
    for c, (a, b) in enumerate(topology.parts):
        owners.setdefault(a, []).append(c)
        owners.setdefault(b, []).append(c)
    for j, parts in owners.items():
        if all(c in out.dropped_parts for c in parts):
            out.points[j, 2] = 0.0
    return out


def perturb_joints(skeleton: PoseSkeleton, jitter_sigma: float, rng_seed) -> PoseSkeleton:
    if jitter_sigma < 0:
        raise ValueError("jitter_sigma must be >= 0")
    out = skeleton.copy()
    if jitter_sigma == 0:
        return out
    rng = np.random.default_rng(rng_seed)
    offsets = rng.normal(0.0, jitter_sigma, size=(skeleton.joint_count, 2))
    live = out.points[:, 2] > 0
    out.points[live, :2] += offsets[live]
    if out.canvas is not None:
        h, w = out.canvas
        out.points[:, 0] = np.clip(out.points[:, 0], 0, w - 1)
        out.points[:, 1] = np.clip(out.points[:, 1], 0, h - 1)
    return out


def scale_limbs(skeleton: PoseSkeleton, topology: SkeletonTopology, limb_scale_range, rng_seed) -> PoseSkeleton:
    """Stretch each scalable part about its proximal joint; everything distal moves rigidly."""
    skeleton.check(topology)
    lo, hi = limb_scale_range
    rng = np.random.default_rng(rng_seed)
    factors = rng.uniform(lo, hi, size=len(topology.scalable_parts))
    out = skeleton.copy()
    if not topology.scalable_parts:
        return out
    parent = topology.parent_map()

    def depth(j):
        d = 0
        while parent.get(j, -1) != -1:
            j = parent[j]
            d += 1
        return d

    # proximal parts first so distal parts scale from their already-moved anchor
    order = sorted(range(len(topology.scalable_parts)),
                   key=lambda i: depth(topology.oriented_part(topology.scalable_parts[i])[0]))
    xy, conf = out.points[:, :2], out.points[:, 2]
    for i in order:
        proximal, distal = topology.oriented_part(topology.scalable_parts[i])
        if conf[proximal] <= 0 or conf[distal] <= 0 or factors[i] == 1.0:
            continue
        delta = (xy[distal] - xy[proximal]) * (factors[i] - 1.0)
        moved = [distal] + topology.descendants(distal)
        xy[moved] += delta
    return out


def augment_pose(skeleton: PoseSkeleton, topology: SkeletonTopology, config: AugmentConfig, rng_seed) -> PoseSkeleton:
    """scale -> jitter -> drop, each with its own sub-seed."""
    if not config.enabled:
        return skeleton.copy()
    s_scale, s_jitter, s_drop = np.random.SeedSequence(rng_seed).spawn(3)
    out = scale_limbs(skeleton, topology, config.limb_scale_range, s_scale)
    out = perturb_joints(out, config.sigma_for(skeleton), s_jitter)
    return drop_parts(out, topology, config.drop_prob, s_drop)
