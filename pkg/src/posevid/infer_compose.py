"""Frame generation from pose sequences and green-screen compositing."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from scipy import ndimage

from .datapipe import GREEN, DEFAULT_KEY_THRESHOLD, chroma_key_mask, window_indices, write_frames
from .nets import Generator
from .pose_core import PoseSkeleton, SkeletonTopology, normalize_sequence, parse_keypoints, rasterize_channels
from .trainer import Checkpoint


def rasterize_sequence(skeletons: Sequence[PoseSkeleton], topology: SkeletonTopology, resolution,
                       thickness=None) -> np.ndarray:
    """(T, n_s, h, w) pose maps."""
    return np.stack([rasterize_channels(s, topology, resolution, thickness) for s in skeletons])


@torch.no_grad()
def _run_windows(G: Generator, inputs: np.ndarray | torch.Tensor, K: int, future: bool, batch: int = 16) -> torch.Tensor:
    """Apply ``G`` to the edge-replicated window around every t of a (T, C, h, w) sequence."""
    x = torch.as_tensor(inputs, dtype=torch.float32)
    T = len(x)
    out = []
    for lo in range(0, T, batch):
        idx = [window_indices(T, t, K, future) for t in range(lo, min(lo + batch, T))]
        win = x[torch.as_tensor(idx)]  # (b, 2K+1, C, h, w)
        out.append(G(win.reshape(len(idx), -1, *x.shape[-2:])))
    return torch.cat(out)


@torch.no_grad()
def generate_sequence(skeletons: Sequence[PoseSkeleton], stage1: Checkpoint, stage2: Checkpoint | None = None,
                      *, normalize: bool = False, thickness=None, batch: int = 16) -> np.ndarray:
    """(T, H, W, 3) frames in [0, 1]; G2 refines G1 outputs when a stage-2 checkpoint is given."""
    if len(skeletons) == 0:
        raise ValueError("empty pose sequence")
    topology = stage1.topology
    G1 = stage1.generator.eval()
    K, future = stage1.config.K, stage1.config.future_frames
    if normalize and stage1.corpus is not None:
        skeletons = normalize_sequence(skeletons, topology, stage1.corpus, canvas=stage1.corpus.canvas)
    thickness = thickness or stage1.config.thickness
    poses = rasterize_sequence(skeletons, topology, stage1.resolution, thickness)
    frames = _run_windows(G1, poses, K, future, batch)
    if stage2 is not None:
        if stage2.stage != 2 or stage2.config.K != K:
            raise ValueError("stage-2 checkpoint does not match the stage-1 checkpoint")
        frames = _run_windows(stage2.generator.eval(), frames, K, stage2.config.future_frames, batch)
    out = ((frames.clamp(-1, 1) + 1) / 2).permute(0, 2, 3, 1).numpy()
    return np.ascontiguousarray(out, dtype=np.float32)


def fit_background(background: np.ndarray, resolution) -> np.ndarray:
    """Scale so the background covers ``resolution`` (aspect preserved), then center-crop."""
    bg = np.asarray(background, dtype=np.float32)
    h, w = resolution
    bh, bw = bg.shape[:2]
    s = max(h / bh, w / bw)
    if (bh, bw) != (h, w):
        nh, nw = max(h, int(round(bh * s))), max(w, int(round(bw * s)))
        x = torch.from_numpy(np.ascontiguousarray(bg.transpose(2, 0, 1)))[None]
        bg = F.interpolate(x, size=(nh, nw), mode="bilinear", antialias=True, align_corners=False)[0]
        bg = bg.clamp(0, 1).numpy().transpose(1, 2, 0)
        y0, x0 = (nh - h) // 2, (nw - w) // 2
        bg = bg[y0:y0 + h, x0:x0 + w]
    return bg


def feathered_alpha(mask: np.ndarray) -> np.ndarray:
    """Binary mask to alpha with a 1-pixel linear ramp across the boundary (0.75 inside, 0.25 outside)."""
    m = np.asarray(mask).astype(bool)
    alpha = m.astype(np.float32)
    if m.all() or not m.any():
        return alpha
    inner_edge = m & ~ndimage.binary_erosion(m, border_value=1)
    outer_edge = ~m & ndimage.binary_dilation(m)
    alpha[inner_edge] = 0.75
    alpha[outer_edge] = 0.25
    return alpha


def composite_background(frames, background, key_color=GREEN, threshold: float = DEFAULT_KEY_THRESHOLD) -> np.ndarray:
    """Key out the solid-green backdrop of generated frames and blend them over ``background``.

    ``background`` is one (H, W, 3) image or a per-frame (T, H, W, 3) stack.
    """
    frames = np.asarray(frames, dtype=np.float32)
    single = frames.ndim == 3
    if single:
        frames = frames[None]
    bg = np.asarray(background, dtype=np.float32)
    res = frames.shape[1:3]
    bgs = [fit_background(bg, res)] * len(frames) if bg.ndim == 3 else [fit_background(b, res) for b in bg]
    if len(bgs) != len(frames):
        raise ValueError("background frame count does not match generated frames")
    out = np.empty_like(frames)
    for i, (f, b) in enumerate(zip(frames, bgs)):
        a = feathered_alpha(chroma_key_mask(f, key_color, threshold))[..., None]
        out[i] = a * f + (1 - a) * b
    return out[0] if single else out


def load_keypoint_sequence(path, topology: SkeletonTopology) -> list[PoseSkeleton]:
    return list(parse_keypoints(Path(path).read_bytes(), topology))


def generate_video(keypoints_file, stage1: Checkpoint, stage2: Checkpoint | None, out_dir, *, background=None,
                   normalize: bool = True) -> list[Path]:
    """Render one frame per keypoint frame into ``out_dir`` as numbered PNGs."""
    kp = parse_keypoints(Path(keypoints_file).read_bytes(), stage1.topology)
    frames = generate_sequence(list(kp), stage1, stage2, normalize=normalize)
    if background is not None:
        frames = composite_background(frames, background)
    return write_frames(out_dir, frames)
