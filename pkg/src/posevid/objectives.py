"""Loss terms and the full generator objective."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import torch

from .nets import FeatureBackbone

SCORE_EPS = 1e-7
PERCEPTUAL_WEIGHTS = (1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0)


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass(frozen=True)
class LossWeights:
    lambda_vgg: float = 10.0
    lambda_fm: float = 10.0
    gan_flavor: str = "least_squares"

    def __post_init__(self):
        if self.lambda_vgg < 0 or self.lambda_fm < 0:
            raise ValueError("loss weights must be >= 0")
        if self.gan_flavor not in ("log", "least_squares"):
            raise ValueError(f"unknown gan_flavor {self.gan_flavor!r}")


REPORT_TERMS = ("adv_paired", "adv_temporal", "adv_unpaired", "vgg", "fm_paired", "fm_temporal",
                "total_G", "total_D_p", "total_D_t", "total_D_w")


@dataclass
class LossReport:
    adv_paired: float = 0.0
    adv_temporal: float = 0.0
    adv_unpaired: float = 0.0
    vgg: float = 0.0
    fm_paired: float = 0.0
    fm_temporal: float = 0.0
    total_G: float = 0.0
    total_D_p: float = 0.0
    total_D_t: float = 0.0
    total_D_w: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def _as_score_list(scores) -> list[torch.Tensor]:
    if torch.is_tensor(scores):
        return [scores]
    out = []
    for s in scores:
        # a per-scale feature list: the score map is its last entry
        out.append(s[-1] if isinstance(s, (list, tuple)) else s)
    return out


def _check_finite(*tensors):
    for t in tensors:
        if not torch.isfinite(t).all():
            raise NonFiniteLossError("non-finite discriminator scores")


def gan_d_loss(real_scores, fake_scores, flavor: str = "least_squares") -> torch.Tensor:
    """Discriminator loss averaged over patches, then over scales."""
    real, fake = _as_score_list(real_scores), _as_score_list(fake_scores)
    _check_finite(*real, *fake)
    terms = []
    for r, f in zip(real, fake):
        if flavor == "log":
            r = r.clamp(SCORE_EPS, 1 - SCORE_EPS)
            f = f.clamp(SCORE_EPS, 1 - SCORE_EPS)
            terms.append(-(torch.log(r).mean() + torch.log(1 - f).mean()))
        elif flavor == "least_squares":
            terms.append(0.5 * (((r - 1) ** 2).mean() + (f ** 2).mean()))
        else:
            raise ValueError(f"unknown gan_flavor {flavor!r}")
    return torch.stack(terms).mean()


def gan_g_loss(fake_scores, flavor: str = "least_squares") -> torch.Tensor:
    """Non-saturating generator loss."""
    fake = _as_score_list(fake_scores)
    _check_finite(*fake)
    terms = []
    for f in fake:
        if flavor == "log":
            terms.append(-torch.log(f.clamp(SCORE_EPS, 1 - SCORE_EPS)).mean())
        elif flavor == "least_squares":
            terms.append(0.5 * ((f - 1) ** 2).mean())
        else:
            raise ValueError(f"unknown gan_flavor {flavor!r}")
    return torch.stack(terms).mean()


def adversarial_loss_paired(D, condition, real, fake, flavor: str = "least_squares"):
    """(d_loss, g_loss) for the single-frame paired discriminator conditioned on the stage input."""
    d_loss = gan_d_loss(D.scores(real, condition), D.scores(fake.detach(), condition), flavor)
    g_loss = gan_g_loss(D.scores(fake, condition), flavor)
    return d_loss, g_loss


def stack_frames(frames: torch.Tensor) -> torch.Tensor:
    """(N, M, 3, H, W) -> (N, 3M, H, W), time-ordered along channels."""
    n, m, c, h, w = frames.shape
    return frames.reshape(n, m * c, h, w)


def adversarial_loss_temporal(D_t, real_frames, fake_frames, flavor: str = "least_squares"):
    """Unconditioned temporal loss on ``(N, M, 3, H, W)`` consecutive-frame stacks."""
    M = D_t.spec.input_channels // 3
    for name, x in (("real", real_frames), ("fake", fake_frames)):
        if x.dim() != 5 or x.shape[1] != M:
            raise ValueError(f"{name} stack must hold exactly M={M} frames, got shape {tuple(x.shape)}")
    real, fake = stack_frames(real_frames), stack_frames(fake_frames)
    d_loss = gan_d_loss(D_t.scores(real), D_t.scores(fake.detach()), flavor)
    g_loss = gan_g_loss(D_t.scores(fake), flavor)
    return d_loss, g_loss


def adversarial_loss_unpaired(D_w, wild_pose, fake, ref_pose, ref_frame, flavor: str = "least_squares"):
    """Positives are recorded pairs (ref_pose, ref_frame); negatives pair the wild pose with its output."""
    d_loss = gan_d_loss(D_w.scores(ref_frame, ref_pose), D_w.scores(fake.detach(), wild_pose), flavor)
    g_loss = gan_g_loss(D_w.scores(fake, wild_pose), flavor)
    return d_loss, g_loss


def perceptual_loss(extractor: FeatureBackbone, generated: torch.Tensor, target: torch.Tensor,
                    weights=PERCEPTUAL_WEIGHTS) -> torch.Tensor:
    """Weighted mean-absolute feature difference; images in [0, 1]."""
    fg = extractor(generated)
    with torch.no_grad():
        ft = extractor(target)
    loss = generated.new_zeros(())
    for w, a, b in zip(weights, fg, ft):
        loss = loss + w * (a - b.detach()).abs().mean()
    return loss


def feature_matching_loss(D, real, fake, condition=None) -> torch.Tensor:
    """Mean |features(real) - features(fake)| over intermediate layers and scales.

    Real features are constants. The final score layer of each scale is excluded.
    """
    with torch.no_grad():
        real_feats = D(real, condition)
    return feature_matching_from_features(real_feats, D(fake, condition))


def feature_matching_from_features(real_feats, fake_feats) -> torch.Tensor:
    terms = []
    for rs, fs in zip(real_feats, fake_feats):
        layers = max(len(fs) - 1, 1)
        for r, f in zip(rs[:layers], fs[:layers]):
            terms.append((f - r.detach()).abs().mean())
    return torch.stack(terms).mean()


def _value(x) -> float:
    if x is None:
        return 0.0
    return float(x.detach()) if torch.is_tensor(x) else float(x)


def total_generator_loss(terms: dict, weights: LossWeights, flags: dict | None = None):
    """Weighted generator objective.

    ``terms`` may hold ``adv_paired``, ``adv_temporal``, ``adv_unpaired``, ``vgg``,
    ``fm_paired``, ``fm_temporal`` (tensors or floats). Missing terms, and terms whose
    flag in ``flags`` is False, contribute exactly 0.
    """
    flags = flags or {}
    gate = {
        "adv_unpaired": flags.get("unpaired", True),
        "adv_temporal": flags.get("temporal", True),
        "fm_temporal": flags.get("temporal", True),
    }
    active = {k: v for k, v in terms.items() if v is not None and gate.get(k, True)}
    for k, v in active.items():
        if not math.isfinite(_value(v)):
            raise NonFiniteLossError(f"loss term {k} is not finite")
    total = 0.0
    for k in ("adv_paired", "adv_temporal", "adv_unpaired"):
        if k in active:
            total = total + active[k]
    if "vgg" in active:
        total = total + weights.lambda_vgg * active["vgg"]
    fm = 0.0
    for k in ("fm_paired", "fm_temporal"):
        if k in active:
            fm = fm + active[k]
    total = total + weights.lambda_fm * fm
    report = LossReport(**{k: _value(active.get(k)) for k in
                           ("adv_paired", "adv_temporal", "adv_unpaired", "vgg", "fm_paired", "fm_temporal")})
    report.total_G = _value(total)
    return total, report
