"""Dataset ingestion, chroma-key preprocessing, temporal windows, samplers and the synthetic corpus."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .augment import AugmentConfig, augment_pose
from .pose_core import (
    BODY15,
    KeypointFile,
    NoPoseError,
    PoseSkeleton,
    SkeletonTopology,
    default_thickness,
    draw_segment,
    parse_keypoints,
    pose_bbox,
    rasterize_channels,
    serialize_keypoints,
)

if TYPE_CHECKING:
    from .trainer import TrainConfig

GREEN = (0.0, 0.6, 0.0)
DEFAULT_KEY_THRESHOLD = 0.3
SPLIT_RATIO = (17, 3)

CLIP_FORMAT = "posevid.clip"
CLIP_VERSION = 1
MANIFEST_FORMAT = "posevid.manifest"
MANIFEST_VERSION = 1

TOPOLOGIES = {"body15": BODY15}


class AlignmentError(ValueError):
    """Frame and keypoint counts disagree."""


class EmptySplitError(ValueError):
    pass


# ---------------------------------------------------------------- frames and masks

def chroma_key_mask(frame: np.ndarray, key_color=GREEN, threshold: float = DEFAULT_KEY_THRESHOLD) -> np.ndarray:
    """1 where the RGB distance to ``key_color`` exceeds ``threshold`` (foreground), else 0."""
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    frame = np.asarray(frame, dtype=np.float64)
    dist = np.sqrt(((frame - np.asarray(key_color, dtype=np.float64)) ** 2).sum(axis=-1))
    return (dist > threshold).astype(np.uint8)


def read_frame(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0


def write_frame(path, frame: np.ndarray) -> None:
    data = np.clip(np.rint(np.asarray(frame) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, "RGB").save(path)


def frame_paths(frames_dir) -> list[Path]:
    paths = sorted(p for p in Path(frames_dir).iterdir() if p.suffix.lower() == ".png")
    if not paths:
        raise FileNotFoundError(f"no .png frames in {frames_dir}")
    return paths


def load_frames(frames_dir) -> np.ndarray:
    return np.stack([read_frame(p) for p in frame_paths(frames_dir)])


def write_frames(frames_dir, frames, start: int = 0) -> list[Path]:
    frames_dir = Path(frames_dir)
    frames_dir.mkdir(parents=True, exist_ok=True)
    out = []
    for i, frame in enumerate(frames):
        p = frames_dir / f"{start + i:06d}.png"
        write_frame(p, frame)
        out.append(p)
    return out


def resize_frames(frames: np.ndarray, resolution) -> np.ndarray:
    """Resize ``(..., 3, H, W)`` channels-first frames with antialiasing."""
    h, w = resolution
    if frames.shape[-2:] == (h, w):
        return frames
    lead = frames.shape[:-3]
    x = torch.from_numpy(np.ascontiguousarray(frames.reshape(-1, *frames.shape[-3:]), dtype=np.float32))
    y = F.interpolate(x, size=(h, w), mode="bilinear", antialias=True, align_corners=False)
    return y.clamp(0, 1).numpy().reshape(*lead, frames.shape[-3], h, w)


# ---------------------------------------------------------------- clip preparation

def split_frames(num_frames: int, ratio=SPLIT_RATIO) -> tuple[range, range]:
    """Contiguous train/val split of one clip by duration."""
    a, b = ratio
    n_train = int(round(num_frames * a / (a + b)))
    return range(0, n_train), range(n_train, num_frames)


def union_bbox(skeletons: Sequence[PoseSkeleton], margin_fraction: float) -> tuple[float, float, float, float]:
    boxes = []
    for s in skeletons:
        try:
            boxes.append(pose_bbox(s, margin_fraction))
        except NoPoseError:
            continue
    if not boxes:
        raise NoPoseError("no confident keypoint in the whole clip")
    b = np.array(boxes)
    return float(b[:, 0].min()), float(b[:, 1].min()), float(b[:, 2].max()), float(b[:, 3].max())


def crop_window(box, out_resolution) -> tuple[int, int, int, int]:
    """Integer pixel window ``(x, y, width, height)`` covering ``box`` with the output aspect ratio."""
    x0, y0, x1, y1 = box
    H, W = out_resolution
    bw, bh = x1 - x0 + 1.0, y1 - y0 + 1.0
    if bw / bh < W / H:
        bw = bh * W / H
    else:
        bh = bw * H / W
    width, height = int(np.ceil(bw)), int(np.ceil(bh))
    cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
    return int(np.floor(cx - (width - 1) / 2.0)), int(np.floor(cy - (height - 1) / 2.0)), width, height


def _crop_padded(img: np.ndarray, x: int, y: int, width: int, height: int, fill) -> np.ndarray:
    h, w = img.shape[:2]
    out = np.empty((height, width) + img.shape[2:], dtype=img.dtype)
    out[...] = fill
    sx0, sy0 = max(x, 0), max(y, 0)
    sx1, sy1 = min(x + width, w), min(y + height, h)
    if sx1 > sx0 and sy1 > sy0:
        out[sy0 - y:sy1 - y, sx0 - x:sx1 - x] = img[sy0:sy1, sx0:sx1]
    return out


@dataclass
class ProcessedClip:
    frames: np.ndarray  # (T, H, W, 3) float32, background == fill color
    masks: np.ndarray  # (T, H, W) uint8 foreground
    skeletons: list[PoseSkeleton]
    crop: tuple[int, int, int, int] = (0, 0, 0, 0)
    fps: float = 30.0

    def __len__(self):
        return len(self.frames)

    @property
    def resolution(self) -> tuple[int, int]:
        return self.frames.shape[1], self.frames.shape[2]

    def save(self, path) -> None:
        header = {
            "format": CLIP_FORMAT, "version": CLIP_VERSION, "num_frames": len(self),
            "resolution": list(self.resolution), "crop": list(self.crop), "fps": self.fps,
            "arrays": {"frames": "T,H,W,3 float32 RGB in [0,1]", "masks": "T,H,W uint8",
                       "keypoints": "T,J,3 float64 x,y,confidence in crop pixels"},
        }
        keypoints = np.stack([s.points for s in self.skeletons])
        _atomic_write(path, lambda f: np.savez_compressed(
            f, header=np.array(json.dumps(header)), frames=self.frames, masks=self.masks, keypoints=keypoints))

    @classmethod
    def load(cls, path) -> ProcessedClip:
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(str(z["header"]))
            if header.get("format") != CLIP_FORMAT or header.get("version") != CLIP_VERSION:
                raise ValueError(f"{path}: unsupported clip cache {header.get('format')} v{header.get('version')}")
            frames, masks, kp = z["frames"], z["masks"], z["keypoints"]
        res = tuple(header["resolution"])
        skeletons = [PoseSkeleton(p, frame_index=i, canvas=res) for i, p in enumerate(kp)]
        return cls(frames, masks, skeletons, tuple(header["crop"]), float(header["fps"]))


def _atomic_write(path, writer) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        writer(f)
    os.replace(tmp, path)


def process_clip(frames: np.ndarray, keypoints: KeypointFile | Sequence[PoseSkeleton], *, key_color=GREEN,
                 threshold: float = DEFAULT_KEY_THRESHOLD, margin_fraction: float = 0.1,
                 out_resolution=(64, 64), chroma_key: bool = True, fill_color=GREEN) -> ProcessedClip:
    """Key out the backdrop, fill it with ``fill_color``, crop to the clip-wide pose box and resize."""
    skeletons = list(keypoints)
    frames = np.asarray(frames, dtype=np.float32)
    if len(frames) != len(skeletons):
        raise AlignmentError(f"{len(frames)} frames but {len(skeletons)} keypoint records")
    T, h, w = frames.shape[:3]
    canvas = (h, w)
    skeletons = [s if s.canvas is not None else s.copy(canvas=canvas) for s in skeletons]
    fill = np.asarray(fill_color, dtype=np.float32)
    H, W = out_resolution

    cx, cy, cw, ch = crop_window(union_bbox(skeletons, margin_fraction), out_resolution)
    out_frames = np.empty((T, H, W, 3), dtype=np.float32)
    out_masks = np.empty((T, H, W), dtype=np.uint8)
    for t in range(T):
        mask = chroma_key_mask(frames[t], key_color, threshold) if chroma_key else np.ones((h, w), np.uint8)
        img = np.where(mask[..., None] > 0, frames[t], fill)
        img = _crop_padded(img, cx, cy, cw, ch, fill)
        m = _crop_padded(mask.astype(np.float32), cx, cy, cw, ch, 0.0)
        stacked = np.concatenate([img.transpose(2, 0, 1), m[None]], axis=0)
        resized = resize_frames(stacked[None], (H, W))[0] if (ch, cw) != (H, W) else stacked
        fg = resized[3] >= 0.5
        out_masks[t] = fg
        out_frames[t] = np.where(fg[..., None], resized[:3].transpose(1, 2, 0), fill)

    sx, sy = W / cw, H / ch
    out_skeletons = []
    for i, s in enumerate(skeletons):
        pts = s.points.copy()
        pts[:, 0] = (pts[:, 0] - cx + 0.5) * sx - 0.5
        pts[:, 1] = (pts[:, 1] - cy + 0.5) * sy - 0.5
        out_skeletons.append(PoseSkeleton(pts, frame_index=i, canvas=(H, W)))
    fps = keypoints.fps if isinstance(keypoints, KeypointFile) else 30.0
    return ProcessedClip(out_frames, out_masks, out_skeletons, (cx, cy, cw, ch), fps)


def prepare_paired_clip(frames_dir, keypoints_file, topology: SkeletonTopology = BODY15, **kwargs) -> ProcessedClip:
    frames = load_frames(frames_dir)
    keypoints = parse_keypoints(Path(keypoints_file).read_bytes(), topology)
    return process_clip(frames, keypoints, **kwargs)


# ---------------------------------------------------------------- manifest

@dataclass
class PairedClipEntry:
    frames_dir: str
    keypoints_file: str
    split: str
    frame_range: tuple[int, int]
    cache: str | None = None

    def __post_init__(self):
        if self.split not in ("train", "val"):
            raise ValueError(f"split must be train or val, got {self.split!r}")
        self.frame_range = (int(self.frame_range[0]), int(self.frame_range[1]))


@dataclass
class UnpairedClipEntry:
    keypoints_file: str


@dataclass
class DatasetManifest:
    paired_clips: list[PairedClipEntry]
    unpaired_clips: list[UnpairedClipEntry] = field(default_factory=list)
    resolution: tuple[int, int] = (64, 64)
    topology: str = "body15"
    split_ratio: tuple[int, int] = SPLIT_RATIO
    root: Path | None = None

    def resolve(self, rel) -> Path:
        p = Path(rel)
        return p if p.is_absolute() or self.root is None else self.root / p

    def to_json(self) -> str:
        doc = {
            "format": MANIFEST_FORMAT, "version": MANIFEST_VERSION,
            "resolution": list(self.resolution), "topology": self.topology,
            "split_ratio": list(self.split_ratio),
            "paired_clips": [
                {"frames_dir": c.frames_dir, "keypoints_file": c.keypoints_file, "split": c.split,
                 "frame_range": list(c.frame_range), "cache": c.cache} for c in self.paired_clips
            ],
            "unpaired_clips": [{"keypoints_file": c.keypoints_file} for c in self.unpaired_clips],
        }
        return json.dumps(doc, indent=2)

    def save(self, path) -> None:
        text = self.to_json().encode()
        _atomic_write(path, lambda f: f.write(text))

    @classmethod
    def load(cls, path, check_files: bool = True) -> DatasetManifest:
        path = Path(path)
        doc = json.loads(path.read_text())
        if doc.get("format") != MANIFEST_FORMAT:
            raise ValueError(f"{path}: not a dataset manifest")
        if doc.get("version") != MANIFEST_VERSION:
            raise ValueError(f"{path}: unsupported manifest version {doc.get('version')}")
        m = cls(
            paired_clips=[PairedClipEntry(**c) for c in doc["paired_clips"]],
            unpaired_clips=[UnpairedClipEntry(**c) for c in doc.get("unpaired_clips", [])],
            resolution=tuple(doc["resolution"]),
            topology=doc.get("topology", "body15"),
            split_ratio=tuple(doc.get("split_ratio", SPLIT_RATIO)),
            root=path.parent,
        )
        if check_files:
            m.check_files()
        return m

    def check_files(self) -> None:
        missing = []
        for c in self.paired_clips:
            for rel in (c.frames_dir, c.keypoints_file) + ((c.cache,) if c.cache else ()):
                if not self.resolve(rel).exists():
                    missing.append(str(rel))
        for c in self.unpaired_clips:
            if not self.resolve(c.keypoints_file).exists():
                missing.append(str(c.keypoints_file))
        if missing:
            raise FileNotFoundError(f"manifest references missing files: {', '.join(sorted(set(missing)))}")

    def topology_obj(self) -> SkeletonTopology:
        return TOPOLOGIES[self.topology]


# ---------------------------------------------------------------- in-memory dataset

@dataclass
class ClipData:
    frames: np.ndarray  # (T, H, W, 3)
    skeletons: list[PoseSkeleton]
    name: str = ""

    def __len__(self):
        return len(self.skeletons)


@dataclass
class PoseVideoDataset:
    topology: SkeletonTopology
    resolution: tuple[int, int]
    train: list[ClipData]
    val: list[ClipData] = field(default_factory=list)
    unpaired: list[list[PoseSkeleton]] = field(default_factory=list)

    @classmethod
    def from_manifest(cls, manifest: DatasetManifest) -> PoseVideoDataset:
        from .pose_core import corpus_stats, normalize_sequence

        topology = manifest.topology_obj()
        caches: dict[str, ProcessedClip] = {}
        train, val = [], []
        for c in manifest.paired_clips:
            key = c.cache or f"{c.frames_dir}|{c.keypoints_file}"
            if key not in caches:
                if c.cache:
                    caches[key] = ProcessedClip.load(manifest.resolve(c.cache))
                else:
                    caches[key] = prepare_paired_clip(manifest.resolve(c.frames_dir), manifest.resolve(c.keypoints_file),
                                                      topology, out_resolution=manifest.resolution)
            clip = caches[key]
            a, b = c.frame_range
            data = ClipData(clip.frames[a:b], clip.skeletons[a:b], f"{c.frames_dir}[{a}:{b}]")
            (train if c.split == "train" else val).append(data)
        stats = corpus_stats([s for clip in train for s in clip.skeletons], topology)
        unpaired = []
        for c in manifest.unpaired_clips:
            kp = parse_keypoints(manifest.resolve(c.keypoints_file).read_bytes(), topology)
            unpaired.append(normalize_sequence(list(kp), topology, stats, canvas=tuple(manifest.resolution)))
        return cls(topology, tuple(manifest.resolution), train, val, unpaired)

    def train_frames(self) -> int:
        return sum(len(c) for c in self.train)


# ---------------------------------------------------------------- temporal windows

@dataclass
class TemporalWindow:
    slices: np.ndarray  # (2K+1, ...) ascending time
    center_index: int
    indices: list[int]


def window_indices(length: int, t: int, K: int, future: bool = True) -> list[int]:
    """Frame indices of the window around ``t`` with edge replication.

    Without future frames the window is ``t-K .. t`` front-padded with copies of
    ``t-K`` so its length stays ``2K+1``.
    """
    if length < 1:
        raise ValueError("empty sequence")
    if K < 0:
        raise ValueError("K must be >= 0")
    raw = range(t - K, t + K + 1) if future else [t - K] * K + list(range(t - K, t + 1))
    return [min(max(i, 0), length - 1) for i in raw]


def temporal_window(sequence, t: int, K: int, future: bool = True) -> TemporalWindow:
    if len(sequence) == 0:
        raise ValueError("empty sequence")
    idx = window_indices(len(sequence), t, K, future)
    return TemporalWindow(np.stack([np.asarray(sequence[i]) for i in idx]), t, idx)


# ---------------------------------------------------------------- samplers

@dataclass
class PairedBatch:
    windows: np.ndarray  # (B, S, 2K+1, n_s, h, w) generator inputs for S consecutive targets
    poses: np.ndarray  # (B, S, n_s, h, w) pose map at each target time
    frames: np.ndarray  # (B, S, 3, h, w) ground truth in [0, 1]
    times: np.ndarray  # (B, S)
    clip_ids: np.ndarray  # (B,)
    # stage-2 support: pose windows of every frame a stage-2 window touches
    support: np.ndarray | None = None  # (B, U, 2K+1, n_s, h, w)
    support_index: np.ndarray | None = None  # (B, S, 2K+1) into support


@dataclass
class UnpairedBatch:
    windows: np.ndarray  # (B, 2K+1, n_s, h, w) wild pose windows
    poses: np.ndarray  # (B, n_s, h, w) wild pose at the center time
    ref_poses: np.ndarray  # (B, n_s, h, w) recorded pose p'
    ref_frames: np.ndarray  # (B, 3, h, w) recorded frame f'
    support: np.ndarray | None = None  # (B, U, 2K+1, n_s, h, w)
    support_index: np.ndarray | None = None  # (B, 2K+1)


class _PoseRaster:
    """Rasterizes (optionally augmented) skeletons of one clip, once per frame index."""

    def __init__(self, skeletons, topology, resolution, thickness, augment: AugmentConfig | None, seed):
        self.skeletons, self.topology = skeletons, topology
        self.resolution, self.thickness = resolution, thickness
        self.augment, self.seed = augment, seed
        self.cache: dict[int, np.ndarray] = {}

    def __len__(self):
        return len(self.skeletons)

    def __getitem__(self, i: int) -> np.ndarray:
        if i not in self.cache:
            s = self.skeletons[i]
            if self.augment is not None and self.augment.enabled:
                s = augment_pose(s, self.topology, self.augment, (*self.seed, i))
            self.cache[i] = rasterize_channels(s, self.topology, self.resolution, self.thickness)
        return self.cache[i]


def _support(length: int, targets: list[int], K: int, future: bool):
    """Unique frames reachable by stage-2 windows of ``targets`` and the index map into them."""
    lo = targets[0] - 2 * K
    span = targets[-1] + 2 * K - lo + 1
    frames = [min(max(lo + j, 0), length - 1) for j in range(span)]
    windows = [window_indices(length, t, K, future) for t in targets]
    index = np.array([[frames.index(v) for v in win] for win in windows], dtype=np.int64)
    return frames, index


def _weighted_clip(rng, lengths) -> int:
    lengths = np.asarray(lengths, dtype=np.float64)
    return int(rng.choice(len(lengths), p=lengths / lengths.sum()))


def sample_paired_batch(dataset: PoseVideoDataset, config: TrainConfig, rng_seed, *, span: int | None = None,
                        with_support: bool = False, resolution=None, split: str = "train") -> PairedBatch:
    """Uniform (clip, t) draws from the train split, ``span`` consecutive targets each."""
    clips = dataset.train if split == "train" else dataset.val
    if not clips or sum(len(c) for c in clips) == 0:
        raise EmptySplitError(f"{split} split is empty")
    span = config.M if span is None else span
    resolution = tuple(resolution or dataset.resolution)
    K, future = config.K, config.future_frames
    rng = np.random.default_rng(rng_seed)
    augment = config.augment if config.data_aug else None
    thickness = config.thickness or default_thickness(resolution[0])
    out = {k: [] for k in ("windows", "poses", "frames", "times", "clip_ids", "support", "support_index")}
    for b in range(config.batch_size):
        ci = _weighted_clip(rng, [len(c) for c in clips])
        clip = clips[ci]
        T = len(clip)
        t0 = int(rng.integers(0, max(T - span, 0) + 1))
        sample_seed = int(rng.integers(2 ** 63))
        raster = _PoseRaster(clip.skeletons, dataset.topology, resolution, thickness, augment, (sample_seed,))
        targets = [min(t0 + m, T - 1) for m in range(span)]
        out["windows"].append([np.stack([raster[i] for i in window_indices(T, t, K, future)]) for t in targets])
        out["poses"].append([raster[t] for t in targets])
        out["frames"].append(clip.frames[targets].transpose(0, 3, 1, 2))
        out["times"].append(targets)
        out["clip_ids"].append(ci)
        if with_support:
            frames, index = _support(T, targets, K, future)
            out["support"].append([np.stack([raster[i] for i in window_indices(T, u, K, future)]) for u in frames])
            out["support_index"].append(index)
    frames = resize_frames(np.stack(out["frames"]).astype(np.float32), resolution)
    return PairedBatch(
        windows=np.asarray(out["windows"], dtype=np.float32),
        poses=np.asarray(out["poses"], dtype=np.float32),
        frames=frames,
        times=np.asarray(out["times"]),
        clip_ids=np.asarray(out["clip_ids"]),
        support=np.asarray(out["support"], dtype=np.float32) if with_support else None,
        support_index=np.asarray(out["support_index"]) if with_support else None,
    )


def sample_unpaired_batch(dataset: PoseVideoDataset, config: TrainConfig, rng_seed, *, with_support: bool = False,
                          resolution=None) -> UnpairedBatch:
    """Wild pose windows plus independently drawn recorded pairs (p', f')."""
    if not config.unpaired:
        raise RuntimeError("unpaired branch is disabled in this config")
    wild = [c for c in dataset.unpaired if len(c)]
    if not wild:
        raise EmptySplitError("no unpaired clips")
    if not dataset.train:
        raise EmptySplitError("train split is empty")
    resolution = tuple(resolution or dataset.resolution)
    K, future = config.K, config.future_frames
    thickness = config.thickness or default_thickness(resolution[0])
    rng = np.random.default_rng(rng_seed)
    out = {k: [] for k in ("windows", "poses", "ref_poses", "ref_frames", "support", "support_index")}
    for b in range(config.batch_size):
        wi = _weighted_clip(rng, [len(c) for c in wild])
        seq = wild[wi]
        T = len(seq)
        t = int(rng.integers(0, T))
        raster = _PoseRaster(seq, dataset.topology, resolution, thickness, None, ())
        out["windows"].append(np.stack([raster[i] for i in window_indices(T, t, K, future)]))
        out["poses"].append(raster[t])
        if with_support:
            frames, index = _support(T, [t], K, future)
            out["support"].append([np.stack([raster[i] for i in window_indices(T, u, K, future)]) for u in frames])
            out["support_index"].append(index[0])
        # reference pair comes from an independent draw over the recorded train split
        ci = _weighted_clip(rng, [len(c) for c in dataset.train])
        clip = dataset.train[ci]
        r = int(rng.integers(0, len(clip)))
        out["ref_poses"].append(rasterize_channels(clip.skeletons[r], dataset.topology, resolution, thickness))
        out["ref_frames"].append(clip.frames[r].transpose(2, 0, 1))
    return UnpairedBatch(
        windows=np.asarray(out["windows"], dtype=np.float32),
        poses=np.asarray(out["poses"], dtype=np.float32),
        ref_poses=np.asarray(out["ref_poses"], dtype=np.float32),
        ref_frames=resize_frames(np.stack(out["ref_frames"]).astype(np.float32), resolution),
        support=np.asarray(out["support"], dtype=np.float32) if with_support else None,
        support_index=np.asarray(out["support_index"]) if with_support else None,
    )


# ---------------------------------------------------------------- synthetic stick figure

@dataclass(frozen=True)
class FigureAppearance:
    colors: np.ndarray  # (n_parts, 3)
    widths: np.ndarray  # (n_parts,) as a fraction of frame height
    head_radius: float
    lengths: dict

    @classmethod
    def from_seed(cls, seed, topology: SkeletonTopology = BODY15) -> FigureAppearance:
        rng = np.random.default_rng([seed, 0xA11])
        colors = []
        while len(colors) < topology.n_parts:
            c = rng.uniform(0.0, 1.0, 3)
            # keep well clear of the backdrop so keying is unambiguous
            if np.linalg.norm(c - np.asarray(GREEN)) > 0.55:
                colors.append(c)
        base = {"neck-head": 0.035, "torso": 0.12, "neck-r_shoulder": 0.07, "neck-l_shoulder": 0.07,
                "hip-r_hip": 0.07, "hip-l_hip": 0.07, "r_thigh": 0.07, "l_thigh": 0.07,
                "r_shin": 0.055, "l_shin": 0.055, "r_upper_arm": 0.055, "l_upper_arm": 0.055,
                "r_forearm": 0.045, "l_forearm": 0.045}
        widths = np.array([base.get(n, 0.05) for n in topology.part_names]) * rng.uniform(0.9, 1.15, topology.n_parts)
        scale = rng.uniform(0.95, 1.05)
        lengths = {k: v * scale for k, v in dict(head=0.09, torso=0.24, shoulder=0.08, upper_arm=0.13,
                                                   forearm=0.12, hip=0.055, thigh=0.16, shin=0.15).items()}
        return cls(np.array(colors, dtype=np.float32), widths, float(rng.uniform(0.06, 0.07)), lengths)


def _smooth_track(rng, num_frames, base, amp, n_waves=2):
    t = np.arange(num_frames, dtype=np.float64)
    out = np.full(num_frames, float(base))
    for _ in range(n_waves):
        period = rng.uniform(18.0, 45.0)
        out += rng.uniform(0.3, 1.0) * amp / n_waves * np.sin(2 * np.pi * t / period + rng.uniform(0, 2 * np.pi))
    return out


def synth_motion(seed, num_frames: int, resolution=(64, 64), appearance: FigureAppearance | None = None,
                 topology: SkeletonTopology = BODY15) -> list[PoseSkeleton]:
    """Smooth random joint-angle trajectories of the 15-joint figure, as skeletons."""
    if num_frames < 1:
        raise ValueError("num_frames must be >= 1")
    if topology.joint_count != 15:
        raise ValueError("the synthetic figure uses the 15-joint body topology")
    h, w = resolution
    L = {k: v * h for k, v in (appearance or FigureAppearance.from_seed(seed)).lengths.items()}
    rng = np.random.default_rng([seed, 0xB0D7])
    n = num_frames
    hip_x = _smooth_track(rng, n, w / 2, 0.12 * w)
    hip_y = _smooth_track(rng, n, 0.56 * h, 0.03 * h)
    lean = _smooth_track(rng, n, 0.0, 0.25)
    nod = _smooth_track(rng, n, 0.0, 0.3)
    arms = {side: (_smooth_track(rng, n, 0.5, 1.6), _smooth_track(rng, n, 0.5, 1.2)) for side in (-1, 1)}
    legs = {side: (_smooth_track(rng, n, 0.12, 0.5), _smooth_track(rng, n, -0.3, 0.5)) for side in (-1, 1)}

    def up(angle):
        return np.stack([np.sin(angle), -np.cos(angle)], axis=-1)

    def down(angle, side):
        return np.stack([side * np.sin(angle), np.cos(angle)], axis=-1)

    hip = np.stack([hip_x, hip_y], axis=-1)
    neck = hip + L["torso"] * up(lean)
    head = neck + L["head"] * up(lean + nod)
    across = np.stack([np.cos(lean), np.sin(lean)], axis=-1)
    joints = np.zeros((n, 15, 2))
    joints[:, 0], joints[:, 1], joints[:, 8] = head, neck, hip
    for side, (sh, el, wr), (hp, kn, an) in ((-1, (2, 3, 4), (9, 10, 11)), (1, (5, 6, 7), (12, 13, 14))):
        shoulder = neck + side * L["shoulder"] * across
        a_sh, a_el = arms[side]
        elbow = shoulder + L["upper_arm"] * down(lean + a_sh, side)
        wrist = elbow + L["forearm"] * down(lean + a_sh + np.clip(a_el, -0.2, None), side)
        hip_j = hip + side * L["hip"] * across
        a_hp, a_kn = legs[side]
        knee = hip_j + L["thigh"] * down(a_hp, side)
        ankle = knee + L["shin"] * down(a_hp + np.clip(a_kn, None, 0.1), side)
        joints[:, sh], joints[:, el], joints[:, wr] = shoulder, elbow, wrist
        joints[:, hp], joints[:, kn], joints[:, an] = hip_j, knee, ankle
    points = np.concatenate([joints, np.ones((n, 15, 1))], axis=-1)
    return [PoseSkeleton(points[i], frame_index=i, canvas=(h, w)) for i in range(n)]


_DRAW_ORDER = ("l_shin", "l_thigh", "hip-l_hip", "r_shin", "r_thigh", "hip-r_hip", "torso",
               "neck-l_shoulder", "l_upper_arm", "l_forearm", "neck-r_shoulder", "r_upper_arm", "r_forearm",
               "neck-head")


def render_figure(skeleton: PoseSkeleton, appearance: FigureAppearance, resolution=None,
                  topology: SkeletonTopology = BODY15) -> tuple[np.ndarray, np.ndarray]:
    """Hard-edged render on the green fill; returns (frame (H, W, 3), foreground mask (H, W))."""
    h, w = resolution or skeleton.canvas
    label = np.full((h, w), -1, dtype=np.int64)
    xy = skeleton.xy
    names = list(topology.part_names)
    order = [names.index(n) for n in _DRAW_ORDER if n in names] + \
            [i for i, n in enumerate(names) if n not in _DRAW_ORDER]
    layer = np.zeros((h, w), dtype=np.float32)
    for c in order:
        a, b = topology.parts[c]
        if skeleton.confidence[a] <= 0 or skeleton.confidence[b] <= 0:
            continue
        layer[:] = 0
        draw_segment(layer, xy[a], xy[b], max(appearance.widths[c] * h, 1.0))
        if names[c] == "neck-head":
            draw_segment(layer, xy[b], xy[b], max(2 * appearance.head_radius * h, 1.0))
        label[layer > 0] = c
    frame = np.empty((h, w, 3), dtype=np.float32)
    frame[:] = np.asarray(GREEN, dtype=np.float32)
    fg = label >= 0
    frame[fg] = appearance.colors[label[fg]]
    return frame, fg.astype(np.uint8)


def synth_stick_figure_clip(seed, num_frames: int, resolution=(64, 64), *, appearance_seed=None,
                            topology: SkeletonTopology = BODY15):
    """Deterministic animated figure: returns (frames (T, H, W, 3) float32, skeletons)."""
    appearance = FigureAppearance.from_seed(seed if appearance_seed is None else appearance_seed, topology)
    skeletons = synth_motion(seed, num_frames, resolution, appearance, topology)
    frames = np.stack([render_figure(s, appearance, resolution, topology)[0] for s in skeletons])
    return frames, skeletons


def build_synthetic_dataset(seed: int = 0, num_frames: int = 100, resolution=(64, 64), *, split=SPLIT_RATIO,
                            num_unpaired: int = 4, unpaired_frames: int = 60,
                            topology: SkeletonTopology = BODY15) -> PoseVideoDataset:
    """One recorded subject split 17:3 by duration plus wild (keypoint-only) clips from other motions."""
    frames, skeletons = synth_stick_figure_clip(seed, num_frames, resolution, topology=topology)
    tr, va = split_frames(num_frames, split) if split else (range(num_frames), range(0))
    train = [ClipData(frames[tr.start:tr.stop], _reindex(skeletons[tr.start:tr.stop]), "synthetic[train]")]
    val = [ClipData(frames[va.start:va.stop], _reindex(skeletons[va.start:va.stop]), "synthetic[val]")] if len(va) else []
    unpaired = [synth_motion(seed * 1000 + 17 + k, unpaired_frames, resolution, FigureAppearance.from_seed(seed + 1 + k),
                             topology) for k in range(num_unpaired)]
    return PoseVideoDataset(topology, tuple(resolution), train, val, unpaired)


def _reindex(skeletons):
    return [s.copy(frame_index=i) for i, s in enumerate(skeletons)]


def write_synthetic_corpus(out_dir, seed: int, num_frames: int, source_resolution=(256, 256),
                           num_unpaired: int = 4, unpaired_frames: int = 60) -> dict:
    """Write a synthetic recording (PNG frames + keypoint file) and wild keypoint files to disk."""
    out_dir = Path(out_dir)
    frames, skeletons = synth_stick_figure_clip(seed, num_frames, source_resolution)
    write_frames(out_dir / "subject" / "frames", frames)
    kp = out_dir / "subject" / "keypoints.json"
    kp.write_bytes(serialize_keypoints(skeletons, fps=30.0, source_resolution=source_resolution))
    wild = []
    for k in range(num_unpaired):
        sk = synth_motion(seed * 1000 + 17 + k, unpaired_frames, source_resolution, FigureAppearance.from_seed(seed + 1 + k))
        p = out_dir / "wild" / f"wild_{k:03d}.json"
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_bytes(serialize_keypoints(sk, fps=30.0, source_resolution=source_resolution))
        wild.append(p)
    return {"frames_dir": out_dir / "subject" / "frames", "keypoints_file": kp, "wild": wild}
