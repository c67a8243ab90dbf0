"""Skeleton data model, keypoint file I/O and pose-map rasterization.

Coordinates follow the pixel-center convention: pixel ``(col, row)`` has its
center at ``x = col, y = row``. A skeleton optionally carries the ``canvas``
(height, width) its coordinates live in; rasterizing at another resolution
rescales the coordinates accordingly.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np

KEYPOINT_FORMAT = "posevid.keypoints"
KEYPOINT_VERSION = 1


class KeypointParseError(ValueError):
    """Keypoint file does not follow the schema."""


class TopologyError(ValueError):
    """Joint layout disagrees with the skeleton topology."""


class NoPoseError(ValueError):
    """No confident keypoint to work with."""


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    confidence: float


@dataclass(frozen=True)
class SkeletonTopology:
    joint_count: int
    parts: tuple[tuple[int, int], ...]
    part_names: tuple[str, ...]
    joint_names: tuple[str, ...] = ()
    # kinematic root used to orient parts proximal -> distal
    root: int = 0
    # indices into ``parts`` eligible for limb scaling
    scalable_parts: tuple[int, ...] = ()

    def __post_init__(self):
        parts = tuple(tuple(int(j) for j in p) for p in self.parts)
        object.__setattr__(self, "parts", parts)
        object.__setattr__(self, "part_names", tuple(self.part_names))
        object.__setattr__(self, "joint_names", tuple(self.joint_names))
        object.__setattr__(self, "scalable_parts", tuple(self.scalable_parts))
        if self.joint_count < 1:
            raise TopologyError("joint_count must be >= 1")
        if len(parts) < 1:
            raise TopologyError("topology needs at least one part")
        if len(self.part_names) != len(parts):
            raise TopologyError("part_names must match parts")
        if self.joint_names and len(self.joint_names) != self.joint_count:
            raise TopologyError("joint_names must match joint_count")
        seen = set()
        for a, b in parts:
            if not (0 <= a < self.joint_count and 0 <= b < self.joint_count):
                raise TopologyError(f"part ({a}, {b}) references a joint >= {self.joint_count}")
            key = frozenset((a, b))
            if key in seen:
                raise TopologyError(f"duplicate part ({a}, {b})")
            seen.add(key)
        if not 0 <= self.root < self.joint_count:
            raise TopologyError("root joint out of range")
        for i in self.scalable_parts:
            if not 0 <= i < len(parts):
                raise TopologyError(f"scalable part index {i} out of range")

    @property
    def n_parts(self) -> int:
        return len(self.parts)

    def parent_map(self) -> dict[int, int]:
        """Parent of every joint reachable from the root (BFS over parts)."""
        adjacency: dict[int, list[int]] = {j: [] for j in range(self.joint_count)}
        for a, b in self.parts:
            adjacency[a].append(b)
            adjacency[b].append(a)
        parent = {self.root: -1}
        queue = deque([self.root])
        while queue:
            j = queue.popleft()
            for k in adjacency[j]:
                if k not in parent:
                    parent[k] = j
                    queue.append(k)
        return parent

    def oriented_part(self, part_index: int) -> tuple[int, int]:
        """(proximal, distal) joints of a part w.r.t. the kinematic root."""
        a, b = self.parts[part_index]
        parent = self.parent_map()
        if parent.get(b) == a:
            return a, b
        if parent.get(a) == b:
            return b, a
        raise TopologyError(f"part {part_index} is not a tree edge from root {self.root}")

    def descendants(self, joint: int) -> list[int]:
        parent = self.parent_map()
        children: dict[int, list[int]] = {}
        for j, p in parent.items():
            children.setdefault(p, []).append(j)
        out, stack = [], list(children.get(joint, []))
        while stack:
            j = stack.pop()
            out.append(j)
            stack.extend(children.get(j, []))
        return sorted(out)


BODY15_JOINTS = (
    "head", "neck",
    "r_shoulder", "r_elbow", "r_wrist",
    "l_shoulder", "l_elbow", "l_wrist",
    "mid_hip",
    "r_hip", "r_knee", "r_ankle",
    "l_hip", "l_knee", "l_ankle",
)

BODY15 = SkeletonTopology(
    joint_count=15,
    parts=(
        (1, 0), (1, 2), (2, 3), (3, 4), (1, 5), (5, 6), (6, 7),
        (1, 8), (8, 9), (9, 10), (10, 11), (8, 12), (12, 13), (13, 14),
    ),
    part_names=(
        "neck-head", "neck-r_shoulder", "r_upper_arm", "r_forearm",
        "neck-l_shoulder", "l_upper_arm", "l_forearm", "torso",
        "hip-r_hip", "r_thigh", "r_shin", "hip-l_hip", "l_thigh", "l_shin",
    ),
    joint_names=BODY15_JOINTS,
    root=1,
    scalable_parts=(2, 3, 5, 6, 9, 10, 12, 13),
)


def default_topology() -> SkeletonTopology:
    return BODY15


@dataclass
class PoseSkeleton:
    """Per-frame keypoints stored as a ``(joint_count, 3)`` array of (x, y, confidence)."""

    points: np.ndarray
    frame_index: int = 0
    canvas: tuple[int, int] | None = None
    # parts removed by augmentation; their channels rasterize to zero
    dropped_parts: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if self.frame_index < 0:
            raise ValueError("frame_index must be >= 0")
        if self.canvas is not None:
            self.canvas = (int(self.canvas[0]), int(self.canvas[1]))
        self.dropped_parts = frozenset(self.dropped_parts)

    @classmethod
    def from_keypoints(cls, keypoints: Sequence[Keypoint], **kwargs) -> PoseSkeleton:
        return cls(np.array([[k.x, k.y, k.confidence] for k in keypoints], dtype=np.float64), **kwargs)

    @property
    def keypoints(self) -> list[Keypoint]:
        return [Keypoint(float(x), float(y), float(c)) for x, y, c in self.points]

    @property
    def joint_count(self) -> int:
        return self.points.shape[0]

    @property
    def xy(self) -> np.ndarray:
        return self.points[:, :2]

    @property
    def confidence(self) -> np.ndarray:
        return self.points[:, 2]

    def copy(self, **changes) -> PoseSkeleton:
        changes.setdefault("points", self.points.copy())
        return replace(self, **changes)

    def check(self, topology: SkeletonTopology) -> None:
        if self.joint_count != topology.joint_count:
            raise TopologyError(
                f"frame {self.frame_index}: {self.joint_count} joints, topology expects {topology.joint_count}"
            )

    def __eq__(self, other):
        if not isinstance(other, PoseSkeleton):
            return NotImplemented
        return (
            self.frame_index == other.frame_index
            and self.canvas == other.canvas
            and self.dropped_parts == other.dropped_parts
            and self.points.shape == other.points.shape
            and bool(np.array_equal(self.points, other.points))
        )


@dataclass
class PoseMap:
    """Rasterized pose, ``data`` is ``(height, width, n_parts)`` with values in {0, 1}."""

    data: np.ndarray

    @property
    def resolution(self) -> tuple[int, int]:
        return self.data.shape[0], self.data.shape[1]

    @property
    def n_parts(self) -> int:
        return self.data.shape[2]

    def chw(self) -> np.ndarray:
        return np.ascontiguousarray(self.data.transpose(2, 0, 1))


@dataclass
class KeypointFile:
    """Decoded keypoint file: one skeleton per frame plus the clip header."""

    skeletons: list[PoseSkeleton]
    fps: float
    source_resolution: tuple[int, int]

    def __len__(self) -> int:
        return len(self.skeletons)

    def __getitem__(self, i):
        return self.skeletons[i]

    def __iter__(self) -> Iterator[PoseSkeleton]:
        return iter(self.skeletons)

    @property
    def joint_count(self) -> int:
        return self.skeletons[0].joint_count if self.skeletons else 0


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise KeypointParseError(f"{where}: expected a number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise KeypointParseError(f"{where}: non-finite value")
    return value


def parse_keypoints(raw: bytes | str, topology: SkeletonTopology) -> KeypointFile:
    """Decode a keypoint file; confidences are clamped into [0, 1]."""
    try:
        doc = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise KeypointParseError(f"header: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise KeypointParseError("header: top level must be an object")
    if doc.get("format", KEYPOINT_FORMAT) != KEYPOINT_FORMAT:
        raise KeypointParseError(f"header field 'format': unknown format {doc.get('format')!r}")
    for key in ("joint_count", "fps", "source_resolution", "frames"):
        if key not in doc:
            raise KeypointParseError(f"header: missing field '{key}'")
    joint_count = doc["joint_count"]
    if not isinstance(joint_count, int) or isinstance(joint_count, bool) or joint_count < 1:
        raise KeypointParseError("header field 'joint_count': expected a positive integer")
    if joint_count != topology.joint_count:
        raise TopologyError(f"file declares {joint_count} joints, topology expects {topology.joint_count}")
    fps = _number(doc["fps"], "header field 'fps'")
    res = doc["source_resolution"]
    if not (isinstance(res, list) and len(res) == 2 and all(isinstance(v, int) and v > 0 for v in res)):
        raise KeypointParseError("header field 'source_resolution': expected [height, width] positive integers")
    canvas = (res[0], res[1])
    frames = doc["frames"]
    if not isinstance(frames, list):
        raise KeypointParseError("header field 'frames': expected a list")

    skeletons = []
    for f, record in enumerate(frames):
        if not isinstance(record, list):
            raise KeypointParseError(f"frame {f}: expected a list of joints")
        if len(record) != joint_count:
            raise TopologyError(f"frame {f}: {len(record)} joints, topology expects {joint_count}")
        pts = np.empty((joint_count, 3), dtype=np.float64)
        for j, triple in enumerate(record):
            if not (isinstance(triple, list) and len(triple) == 3):
                raise KeypointParseError(f"frame {f}, joint {j}: expected [x, y, confidence]")
            for k, name in enumerate(("x", "y", "confidence")):
                pts[j, k] = _number(triple[k], f"frame {f}, joint {j}, field '{name}'")
        pts[:, 2] = np.clip(pts[:, 2], 0.0, 1.0)
        skeletons.append(PoseSkeleton(pts, frame_index=f, canvas=canvas))
    return KeypointFile(skeletons, fps, canvas)


def serialize_keypoints(clip: KeypointFile | Sequence[PoseSkeleton], fps: float | None = None,
                        source_resolution: tuple[int, int] | None = None) -> bytes:
    if isinstance(clip, KeypointFile):
        skeletons = clip.skeletons
        fps = clip.fps if fps is None else fps
        source_resolution = clip.source_resolution if source_resolution is None else source_resolution
    else:
        skeletons = list(clip)
    if not skeletons:
        raise ValueError("cannot serialize an empty clip")
    if source_resolution is None:
        source_resolution = skeletons[0].canvas
    if source_resolution is None:
        raise ValueError("source_resolution is required")
    doc = {
        "format": KEYPOINT_FORMAT,
        "version": KEYPOINT_VERSION,
        "joint_count": skeletons[0].joint_count,
        "fps": float(30.0 if fps is None else fps),
        "source_resolution": [int(source_resolution[0]), int(source_resolution[1])],
        "frames": [[[float(v) for v in row] for row in s.points] for s in skeletons],
    }
    return json.dumps(doc).encode("utf-8")


def default_thickness(height: int) -> int:
    """4 px at 256 rows, scaled with resolution."""
    return max(1, int(round(4 * height / 256)))


def _scaled_xy(skeleton: PoseSkeleton, resolution: tuple[int, int]) -> np.ndarray:
    xy = skeleton.xy
    if skeleton.canvas is None or skeleton.canvas == tuple(resolution):
        return xy
    sy = resolution[0] / skeleton.canvas[0]
    sx = resolution[1] / skeleton.canvas[1]
    return np.stack([(xy[:, 0] + 0.5) * sx - 0.5, (xy[:, 1] + 0.5) * sy - 0.5], axis=1)


def draw_segment(canvas: np.ndarray, a, b, thickness: float, value: float = 1.0) -> None:
    """Set every pixel whose center lies within ``thickness / 2`` of segment ``a-b``."""
    h, w = canvas.shape
    r = thickness / 2.0
    ax, ay = float(a[0]), float(a[1])
    bx, by = float(b[0]), float(b[1])
    x_lo = max(int(np.ceil(min(ax, bx) - r)), 0)
    x_hi = min(int(np.floor(max(ax, bx) + r)), w - 1)
    y_lo = max(int(np.ceil(min(ay, by) - r)), 0)
    y_hi = min(int(np.floor(max(ay, by) + r)), h - 1)
    if x_lo > x_hi or y_lo > y_hi:
        return
    px = np.arange(x_lo, x_hi + 1, dtype=np.float64)[None, :]
    py = np.arange(y_lo, y_hi + 1, dtype=np.float64)[:, None]
    dx, dy = bx - ax, by - ay
    seg2 = dx * dx + dy * dy
    if seg2 > 0:
        t = np.clip(((px - ax) * dx + (py - ay) * dy) / seg2, 0.0, 1.0)
    else:
        t = np.zeros((1, 1))
    ex = px - (ax + t * dx)
    ey = py - (ay + t * dy)
    hit = ex * ex + ey * ey <= r * r
    canvas[y_lo:y_hi + 1, x_lo:x_hi + 1][hit] = value


def rasterize_channels(skeleton: PoseSkeleton, topology: SkeletonTopology, resolution: tuple[int, int],
                       thickness: float | None = None, dtype=np.float32) -> np.ndarray:
    """Channels-first ``(n_parts, h, w)`` raster, the layout the networks consume."""
    h, w = int(resolution[0]), int(resolution[1])
    if h < 1 or w < 1:
        raise ValueError("resolution must be positive")
    if thickness is None:
        thickness = default_thickness(h)
    if thickness < 1:
        raise ValueError("thickness must be >= 1")
    skeleton.check(topology)
    xy = _scaled_xy(skeleton, (h, w))
    conf = skeleton.confidence
    out = np.zeros((topology.n_parts, h, w), dtype=dtype)
    for c, (a, b) in enumerate(topology.parts):
        if c in skeleton.dropped_parts or conf[a] <= 0 or conf[b] <= 0:
            continue
        draw_segment(out[c], xy[a], xy[b], thickness)
    return out


def rasterize_pose_map(skeleton: PoseSkeleton, topology: SkeletonTopology, resolution: tuple[int, int],
                       thickness: float | None = None) -> PoseMap:
    chw = rasterize_channels(skeleton, topology, resolution, thickness)
    return PoseMap(np.ascontiguousarray(chw.transpose(1, 2, 0)))


def pose_bbox(skeleton: PoseSkeleton, margin_fraction: float = 0.0) -> tuple[float, float, float, float]:
    """Box ``(x0, y0, x1, y1)`` around confident joints, grown by ``margin_fraction`` of its larger side."""
    mask = skeleton.confidence > 0
    if not mask.any():
        raise NoPoseError(f"frame {skeleton.frame_index}: no confident keypoint")
    xy = skeleton.xy[mask]
    x0, y0 = xy.min(axis=0)
    x1, y1 = xy.max(axis=0)
    m = margin_fraction * max(x1 - x0, y1 - y0)
    x0, y0, x1, y1 = x0 - m, y0 - m, x1 + m, y1 + m
    if skeleton.canvas is not None:
        h, w = skeleton.canvas
        x0, x1 = np.clip([x0, x1], 0, w - 1)
        y0, y1 = np.clip([y0, y1], 0, h - 1)
    return float(x0), float(y0), float(x1), float(y1)


# ---------------------------------------------------------------- coordinate normalization

@dataclass(frozen=True)
class CorpusStats:
    """Median torso length and hip-midpoint location of the training skeletons."""

    torso_length: float
    anchor: tuple[float, float]
    canvas: tuple[int, int] | None = None


def _torso_joints(topology: SkeletonTopology) -> tuple[int, int] | None:
    names = topology.joint_names
    if "neck" in names and "mid_hip" in names:
        return names.index("neck"), names.index("mid_hip")
    return None


def corpus_stats(skeletons: Sequence[PoseSkeleton], topology: SkeletonTopology) -> CorpusStats | None:
    joints = _torso_joints(topology)
    if joints is None or not skeletons:
        return None
    neck, hip = joints
    pts = np.stack([s.points for s in skeletons])
    ok = (pts[:, neck, 2] > 0) & (pts[:, hip, 2] > 0)
    if not ok.any():
        return None
    torso = np.linalg.norm(pts[ok, neck, :2] - pts[ok, hip, :2], axis=1)
    anchor = np.median(pts[ok, hip, :2], axis=0)
    return CorpusStats(float(np.median(torso)), (float(anchor[0]), float(anchor[1])), skeletons[0].canvas)


def normalize_sequence(skeletons: Sequence[PoseSkeleton], topology: SkeletonTopology, reference: CorpusStats | None,
                       canvas: tuple[int, int] | None = None) -> list[PoseSkeleton]:
    """Rescale a foreign pose sequence about its median hip midpoint so its median torso
    length matches ``reference``, then move that anchor onto the reference anchor."""
    own = corpus_stats(skeletons, topology)
    out = []
    for s in skeletons:
        pts = s.points.copy()
        if reference is not None and own is not None and own.torso_length > 0:
            k = reference.torso_length / own.torso_length
            pts[:, :2] = (pts[:, :2] - np.asarray(own.anchor)) * k + np.asarray(reference.anchor)
        out.append(PoseSkeleton(pts, frame_index=s.frame_index,
                                canvas=canvas if canvas is not None else s.canvas, dropped_parts=s.dropped_parts))
    return out
