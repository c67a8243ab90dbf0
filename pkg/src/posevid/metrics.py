"""SSIM, FID and a feature-space perceptual distance, plus CSV reports."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from scipy import ndimage

from .nets import FeatureBackbone, default_backbone

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
FID_EPS = 1e-6
SQRT_IMAG_TOL = 1e-6


class MetricError(ValueError):
    pass


def _gauss_taps(size=SSIM_WINDOW, sigma=SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-x ** 2 / (2 * sigma ** 2))
    return g / g.sum()


def _as_hwc(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[..., None]
    if x.ndim != 3:
        raise MetricError(f"expected an (H, W) or (H, W, C) frame, got shape {x.shape}")
    return x


def ssim(a, b) -> float:
    """Gaussian-windowed SSIM for frames in [0, 1], mean over valid windows and channels."""
    a, b = _as_hwc(a), _as_hwc(b)
    if a.shape != b.shape:
        raise MetricError(f"resolution mismatch: {a.shape} vs {b.shape}")
    taps = _gauss_taps()

    def blur(x):
        for axis in (0, 1):
            x = ndimage.correlate1d(x, taps, axis=axis, mode="reflect")
        return x

    mu_a, mu_b = blur(a), blur(b)
    var_a = blur(a * a) - mu_a ** 2
    var_b = blur(b * b) - mu_b ** 2
    cov = blur(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    smap = num / den
    pad = (SSIM_WINDOW - 1) // 2
    if a.shape[0] > 2 * pad and a.shape[1] > 2 * pad:
        smap = smap[pad:-pad, pad:-pad]
    return float(smap.mean())


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((m + m.T) / 2)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.T


def trace_sqrt_product(sigma_a: np.ndarray, sigma_b: np.ndarray) -> float:
    """tr((Σa Σb)^{1/2}) via the symmetric form sqrt(Σa) Σb sqrt(Σa)."""
    sa = _psd_sqrt(sigma_a)
    inner = sa @ sigma_b @ sa
    w = np.linalg.eigvals(inner)
    if np.abs(w.imag).max(initial=0.0) > SQRT_IMAG_TOL * max(1.0, np.abs(w.real).max(initial=0.0)):
        raise MetricError("matrix square root has a non-negligible imaginary residue")
    w = np.linalg.eigvalsh((inner + inner.T) / 2)
    return float(np.sqrt(np.clip(w, 0, None)).sum())


def frechet_distance(mu_a, sigma_a, mu_b, sigma_b) -> float:
    diff = np.asarray(mu_a) - np.asarray(mu_b)
    tr = np.trace(sigma_a) + np.trace(sigma_b) - 2 * trace_sqrt_product(sigma_a, sigma_b)
    return float(max(diff @ diff + tr, 0.0))


def fid(features_a, features_b, eps: float | None = FID_EPS) -> float:
    """Fréchet distance between Gaussian fits of two (n, d) feature sets.

    ``eps`` adds εI to both covariances; pass None to require full-rank sets.
    """
    fa = np.asarray(features_a, dtype=np.float64)
    fb = np.asarray(features_b, dtype=np.float64)
    if fa.ndim != 2 or fb.ndim != 2 or fa.shape[1] != fb.shape[1]:
        raise MetricError("feature sets must be (n, d) with equal d")
    if min(len(fa), len(fb)) < 2:
        raise MetricError("FID needs at least 2 samples per set")
    d = fa.shape[1]
    sa, sb = np.cov(fa, rowvar=False).reshape(d, d), np.cov(fb, rowvar=False).reshape(d, d)
    if eps is None:
        for s in (sa, sb):
            if np.linalg.matrix_rank(s) < d:
                raise MetricError("degenerate covariance; enable regularization")
    else:
        sa = sa + eps * np.eye(d)
        sb = sb + eps * np.eye(d)
    return frechet_distance(fa.mean(0), sa, fb.mean(0), sb)


def _to_tensor(frames) -> torch.Tensor:
    x = np.asarray(frames, dtype=np.float32)
    if x.ndim == 3:
        x = x[None]
    return torch.from_numpy(np.ascontiguousarray(x.transpose(0, 3, 1, 2)))


@torch.no_grad()
def extract_features(frames, extractor: FeatureBackbone | None = None, batch: int = 32) -> np.ndarray:
    """Global-average-pooled last-stage features for (N, H, W, 3) frames in [0, 1]."""
    extractor = extractor or default_backbone()
    x = _to_tensor(frames)
    out = [extractor(x[i:i + batch])[-1].mean(dim=(2, 3)) for i in range(0, len(x), batch)]
    return torch.cat(out).double().numpy()


def _unit(f: torch.Tensor) -> torch.Tensor:
    return f / (f.norm(dim=1, keepdim=True) + 1e-10)


@torch.no_grad()
def perceptual_distance(a, b, extractor: FeatureBackbone | None = None) -> float:
    """Per-location channel-normalized feature distance: squared L2 over channels, averaged
    spatially and summed over backbone stages."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise MetricError(f"resolution mismatch: {a.shape} vs {b.shape}")
    return float(perceptual_distances(a[None], b[None], extractor)[0])


@torch.no_grad()
def perceptual_distances(a, b, extractor: FeatureBackbone | None = None, batch: int = 32) -> np.ndarray:
    extractor = extractor or default_backbone()
    xa, xb = _to_tensor(a), _to_tensor(b)
    out = []
    for i in range(0, len(xa), batch):
        fa, fb = extractor(xa[i:i + batch]), extractor(xb[i:i + batch])
        d = sum(((_unit(p) - _unit(q)) ** 2).sum(dim=1).mean(dim=(1, 2)) for p, q in zip(fa, fb))
        out.append(d)
    return torch.cat(out).double().numpy()


# ---------------------------------------------------------------- reports

METRIC_COLUMNS = ("frame", "ssim", "perceptual", "fid")


@dataclass
class MetricsReport:
    frames: list[str]
    ssim: np.ndarray
    perceptual: np.ndarray
    fid: float | None
    extra: dict = field(default_factory=dict)

    @property
    def ssim_mean(self) -> float:
        return float(np.mean(self.ssim))

    @property
    def perceptual_mean(self) -> float:
        return float(np.mean(self.perceptual))

    def summary(self) -> dict:
        return {
            "ssim_mean": self.ssim_mean, "ssim_std": float(np.std(self.ssim)),
            "perceptual_mean": self.perceptual_mean, "perceptual_std": float(np.std(self.perceptual)),
            "fid": self.fid,
        }

    def write_csv(self, path) -> Path:
        """One row per frame, then ``mean`` and ``std`` rows; FID only in the ``mean`` row."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(METRIC_COLUMNS)
            for name, s, p in zip(self.frames, self.ssim, self.perceptual):
                w.writerow([name, repr(float(s)), repr(float(p)), ""])
            w.writerow(["mean", repr(self.ssim_mean), repr(self.perceptual_mean),
                        "" if self.fid is None else repr(self.fid)])
            w.writerow(["std", repr(float(np.std(self.ssim))), repr(float(np.std(self.perceptual))), ""])
        return path


def evaluate_frames(generated, reference, names=None, extractor: FeatureBackbone | None = None) -> MetricsReport:
    """Metrics for aligned (N, H, W, 3) frame stacks in [0, 1]."""
    generated, reference = np.asarray(generated), np.asarray(reference)
    if len(generated) != len(reference):
        raise MetricError(f"frame count mismatch: {len(generated)} generated vs {len(reference)} reference")
    if len(generated) == 0:
        raise MetricError("no frames to evaluate")
    extractor = extractor or default_backbone()
    names = names or [f"{i:06d}" for i in range(len(generated))]
    s = np.array([ssim(g, r) for g, r in zip(generated, reference)])
    p = perceptual_distances(generated, reference, extractor)
    fid_value = None
    if len(generated) >= 2:
        fid_value = fid(extract_features(generated, extractor), extract_features(reference, extractor))
    return MetricsReport(list(names), s, p, fid_value)


def evaluate_run(generated_dir, reference_dir, out_csv=None, extractor: FeatureBackbone | None = None) -> MetricsReport:
    from .datapipe import frame_paths, load_frames

    gen_paths, ref_paths = frame_paths(generated_dir), frame_paths(reference_dir)
    if len(gen_paths) != len(ref_paths):
        raise MetricError(f"frame count mismatch: {len(gen_paths)} generated vs {len(ref_paths)} reference")
    report = evaluate_frames(load_frames(generated_dir), load_frames(reference_dir),
                             [p.name for p in gen_paths], extractor)
    if out_csv:
        report.write_csv(out_csv)
    return report


ABLATION_COLUMNS = ("config", "ssim", "perceptual", "fid")


def write_ablation_report(rows: dict[str, MetricsReport], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(ABLATION_COLUMNS)
        for name, r in rows.items():
            w.writerow([name, repr(r.ssim_mean), repr(r.perceptual_mean), "" if r.fid is None else repr(r.fid)])
    return path
