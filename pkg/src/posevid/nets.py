"""Generators and discriminators (pix2pixHD family) plus the frozen feature backbone.

Window slices are stacked along channels; there are no 3D convolutions.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass(frozen=True)
class GeneratorSpec:
    stage: int
    in_channels: int
    out_channels: int = 3
    base_width: int = 32
    num_residual_blocks: int = 4
    num_downsamples: int = 3
    resolution: tuple[int, int] = (64, 64)
    # local enhancers added by progressive growth
    num_enhancers: int = 0
    # stage 2: window slice added to the output, so the network learns a correction to it
    residual_slice: int | None = None

    def __post_init__(self):
        if self.stage not in (1, 2):
            raise ValueError("stage must be 1 or 2")
        object.__setattr__(self, "resolution", tuple(int(v) for v in self.resolution))
        if self.residual_slice is not None:
            n_slices = self.in_channels // self.out_channels
            if self.stage != 2 or not 0 <= self.residual_slice < n_slices:
                raise ValueError("residual_slice needs a stage-2 spec and an index inside the window")

    @classmethod
    def for_stage(cls, stage: int, K: int, n_parts: int = 14, future: bool = True, **kwargs) -> GeneratorSpec:
        """Stage 2 defaults to refining the window's current frame (index K, or 2K without future frames)."""
        per_slice = n_parts if stage == 1 else 3
        if stage == 2:
            kwargs.setdefault("residual_slice", K if future else 2 * K)
        return cls(stage=stage, in_channels=per_slice * (2 * K + 1), **kwargs)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DiscriminatorSpec:
    kind: str
    condition_channels: int
    input_channels: int
    num_scales: int = 2
    base_width: int = 32
    num_layers: int = 3
    patch_output: bool = True
    # squash scores to (0, 1); required by the log-form objective
    sigmoid: bool = False

    def __post_init__(self):
        if self.kind not in ("paired", "unpaired", "temporal"):
            raise ValueError(f"unknown discriminator kind {self.kind!r}")
        if self.kind == "temporal" and self.condition_channels != 0:
            raise ValueError("temporal discriminator is unconditioned")

    @property
    def total_input_channels(self) -> int:
        return self.condition_channels + self.input_channels

    @classmethod
    def paired(cls, stage: int, K: int, n_parts: int = 14, **kwargs) -> DiscriminatorSpec:
        cond = n_parts if stage == 1 else 3 * (2 * K + 1)
        return cls(kind="paired", condition_channels=cond, input_channels=3, **kwargs)

    @classmethod
    def unpaired(cls, n_parts: int = 14, **kwargs) -> DiscriminatorSpec:
        return cls(kind="unpaired", condition_channels=n_parts, input_channels=3, **kwargs)

    @classmethod
    def temporal(cls, M: int, **kwargs) -> DiscriminatorSpec:
        kwargs.setdefault("num_scales", 1)
        return cls(kind="temporal", condition_channels=0, input_channels=3 * M, **kwargs)

    def to_dict(self) -> dict:
        return asdict(self)


DESK_PRESET = dict(base_width=32, num_downsamples=3, num_residual_blocks=4, d_scales=2)
PAPER_PRESET = dict(base_width=64, num_downsamples=4, num_residual_blocks=9, d_scales=3)


class ResnetBlock(nn.Module):
    def __init__(self, dim):
        super().__init__()
        self.block = nn.Sequential(
            nn.ReflectionPad2d(1), nn.Conv2d(dim, dim, 3), nn.InstanceNorm2d(dim), nn.ReLU(True),
            nn.ReflectionPad2d(1), nn.Conv2d(dim, dim, 3), nn.InstanceNorm2d(dim),
        )

    def forward(self, x):
        return x + self.block(x)


class GlobalGenerator(nn.Module):
    def __init__(self, in_channels, out_channels, ngf, n_downsampling, n_blocks):
        super().__init__()
        layers = [nn.ReflectionPad2d(3), nn.Conv2d(in_channels, ngf, 7), nn.InstanceNorm2d(ngf), nn.ReLU(True)]
        for i in range(n_downsampling):
            mult = 2 ** i
            layers += [nn.Conv2d(ngf * mult, ngf * mult * 2, 3, stride=2, padding=1),
                       nn.InstanceNorm2d(ngf * mult * 2), nn.ReLU(True)]
        mult = 2 ** n_downsampling
        layers += [ResnetBlock(ngf * mult) for _ in range(n_blocks)]
        for i in range(n_downsampling):
            mult = 2 ** (n_downsampling - i)
            layers += [nn.ConvTranspose2d(ngf * mult, ngf * mult // 2, 3, stride=2, padding=1, output_padding=1),
                       nn.InstanceNorm2d(ngf * mult // 2), nn.ReLU(True)]
        self.body = nn.Sequential(*layers)
        self.head = nn.Sequential(nn.ReflectionPad2d(3), nn.Conv2d(ngf, out_channels, 7), nn.Tanh())

    def forward(self, x):
        return self.head(self.body(x))


class LocalEnhancer(nn.Module):
    """Full-resolution front/back end wrapped around the coarser generator's features."""

    def __init__(self, in_channels, out_channels, ngf, n_blocks=3):
        super().__init__()
        self.front = nn.Sequential(
            nn.ReflectionPad2d(3), nn.Conv2d(in_channels, ngf, 7), nn.InstanceNorm2d(ngf), nn.ReLU(True),
            nn.Conv2d(ngf, ngf * 2, 3, stride=2, padding=1), nn.InstanceNorm2d(ngf * 2), nn.ReLU(True),
        )
        self.back = nn.Sequential(
            *[ResnetBlock(ngf * 2) for _ in range(n_blocks)],
            nn.ConvTranspose2d(ngf * 2, ngf, 3, stride=2, padding=1, output_padding=1),
            nn.InstanceNorm2d(ngf), nn.ReLU(True),
            nn.ReflectionPad2d(3), nn.Conv2d(ngf, out_channels, 7), nn.Tanh(),
        )


class Generator(nn.Module):
    """Encoder -> residual blocks -> decoder, output in [-1, 1] at the input resolution."""

    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        self.spec = spec
        self.global_net = GlobalGenerator(spec.in_channels, spec.out_channels, spec.base_width,
                                          spec.num_downsamples, spec.num_residual_blocks)
        self.enhancers = nn.ModuleList()
        for _ in range(spec.num_enhancers):
            self._add_enhancer()

    def _add_enhancer(self):
        # widths halve per level so each front matches the features handed up from below
        ngf = max(self.spec.base_width // 2 ** (len(self.enhancers) + 1), 1)
        self.enhancers.append(LocalEnhancer(self.spec.in_channels, self.spec.out_channels, ngf))

    def grow(self, seed: int | None = None) -> None:
        """Double the working resolution: new input/output layers around the trained network."""
        with torch.random.fork_rng():
            if seed is not None:
                torch.manual_seed(seed)
            self._add_enhancer()
            _init_weights(self.enhancers[-1])
        self.zero_output_layer()
        h, w = self.spec.resolution
        self.spec = replace(self.spec, num_enhancers=len(self.enhancers), resolution=(2 * h, 2 * w))

    @torch.no_grad()
    def zero_output_layer(self) -> None:
        """Residual generators start as the identity on their residual slice."""
        if self.spec.residual_slice is None:
            return
        conv = self.enhancers[-1].back[-2] if self.enhancers else self.global_net.head[1]
        conv.weight.zero_()
        conv.bias.zero_()

    def forward(self, x):
        if x.dim() != 4 or x.shape[1] != self.spec.in_channels:
            raise ValueError(f"expected (N, {self.spec.in_channels}, H, W) input, got {tuple(x.shape)}")
        out = self._forward(x)
        if self.spec.residual_slice is not None:
            c = self.spec.out_channels
            base = x[:, self.spec.residual_slice * c:(self.spec.residual_slice + 1) * c]
            out = (base + out).clamp(-1, 1)
        return out

    def _forward(self, x):
        if not self.enhancers:
            return self.global_net(x)
        inputs = [x]
        for _ in self.enhancers:
            inputs.append(F.avg_pool2d(inputs[-1], 3, stride=2, padding=1, count_include_pad=False))
        feat = self.global_net.body(inputs[-1])
        for level, enhancer in enumerate(self.enhancers):
            h = enhancer.front(inputs[len(self.enhancers) - 1 - level]) + feat
            if level == len(self.enhancers) - 1:
                return enhancer.back(h)
            feat = enhancer.back[:-3](h)

    def input_layer_names(self) -> set[str]:
        names = {"global_net.body.1.weight", "global_net.body.1.bias"}
        for i in range(len(self.enhancers)):
            names |= {f"enhancers.{i}.front.1.weight", f"enhancers.{i}.front.1.bias"}
        return names


class NLayerDiscriminator(nn.Module):
    def __init__(self, in_channels, ndf=32, n_layers=3, sigmoid=False):
        super().__init__()
        kw, pw = 4, 2
        blocks = [[nn.Conv2d(in_channels, ndf, kw, stride=2, padding=pw), nn.LeakyReLU(0.2, True)]]
        nf = ndf
        for _ in range(1, n_layers):
            prev, nf = nf, min(nf * 2, 512)
            blocks.append([nn.Conv2d(prev, nf, kw, stride=2, padding=pw), nn.InstanceNorm2d(nf), nn.LeakyReLU(0.2, True)])
        prev, nf = nf, min(nf * 2, 512)
        blocks.append([nn.Conv2d(prev, nf, kw, stride=1, padding=pw), nn.InstanceNorm2d(nf), nn.LeakyReLU(0.2, True)])
        last = [nn.Conv2d(nf, 1, kw, stride=1, padding=pw)]
        if sigmoid:
            last.append(nn.Sigmoid())
        blocks.append(last)
        self.blocks = nn.ModuleList(nn.Sequential(*b) for b in blocks)

    def forward(self, x):
        feats = []
        for block in self.blocks:
            x = block(x)
            feats.append(x)
        return feats


class Discriminator(nn.Module):
    """Multi-scale patch discriminator.

    ``forward(x, cond)`` returns one list per scale holding every intermediate
    feature map; the last entry of each list is the patch score map.
    """

    def __init__(self, spec: DiscriminatorSpec):
        super().__init__()
        self.spec = spec
        self.scales = nn.ModuleList(
            NLayerDiscriminator(spec.total_input_channels, spec.base_width, spec.num_layers, spec.sigmoid)
            for _ in range(spec.num_scales)
        )

    def forward(self, x, cond=None):
        if self.spec.condition_channels:
            if cond is None or cond.shape[1] != self.spec.condition_channels:
                raise ValueError(f"{self.spec.kind} discriminator needs a {self.spec.condition_channels}-channel condition")
            x = torch.cat([cond, x], dim=1)
        elif cond is not None:
            raise ValueError("temporal discriminator takes no condition")
        if x.shape[1] != self.spec.total_input_channels:
            raise ValueError(f"expected {self.spec.total_input_channels} channels, got {x.shape[1]}")
        outs = []
        for i, net in enumerate(self.scales):
            if i:
                # condition and image are downsampled together
                x = F.avg_pool2d(x, 3, stride=2, padding=1, count_include_pad=False)
            outs.append(net(x))
        return outs

    def scores(self, x, cond=None) -> list[torch.Tensor]:
        return [feats[-1] for feats in self(x, cond)]


def _init_weights(module: nn.Module):
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.normal_(m.weight, 0.0, 0.02)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


def build_generator(spec: GeneratorSpec, rng_seed: int = 0) -> Generator:
    with torch.random.fork_rng():
        torch.manual_seed(rng_seed)
        net = Generator(spec)
        _init_weights(net)
    net.zero_output_layer()
    return net


def build_discriminator(spec: DiscriminatorSpec, rng_seed: int = 0) -> Discriminator:
    with torch.random.fork_rng():
        torch.manual_seed(rng_seed)
        net = Discriminator(spec)
        _init_weights(net)
    return net


def generator_forward(G: Generator, window) -> torch.Tensor:
    """Run ``G`` on a window shaped ``(2K+1, C, H, W)`` or a batch ``(N, 2K+1, C, H, W)``.

    Slices are concatenated along channels. Returns frames in [-1, 1].
    """
    x = torch.as_tensor(window, dtype=torch.float32) if not torch.is_tensor(window) else window
    single = x.dim() == 4
    if single:
        x = x.unsqueeze(0)
    if x.dim() != 5:
        raise ValueError(f"window must be (2K+1, C, H, W) or (N, 2K+1, C, H, W), got {tuple(x.shape)}")
    n, s, c, h, w = x.shape
    out = G(x.reshape(n, s * c, h, w))
    return out[0] if single else out


# ---------------------------------------------------------------- feature backbone

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


def _pink_noise(n: int, h: int, w: int) -> torch.Tensor:
    """Images in [0, 1] with a 1/f amplitude spectrum, drawn from the current torch RNG."""
    f = torch.fft.fftfreq(h)[:, None] ** 2 + torch.fft.rfftfreq(w)[None] ** 2
    amp = 1 / torch.sqrt(f).clamp(min=1 / max(h, w))
    shape = (n, 3, h, w // 2 + 1)
    z = torch.complex(torch.randn(shape), torch.randn(shape))
    x = torch.fft.irfft2(z * amp, s=(h, w))
    x = (x - x.mean(dim=(2, 3), keepdim=True)) / x.std(dim=(2, 3), keepdim=True)
    return (0.5 + 0.2 * x).clamp(0, 1)


@dataclass(frozen=True)
class BackboneSpec:
    # convolutions per block and block widths mirror the VGG layout
    widths: tuple[int, ...] = (16, 32, 64, 64, 64)
    convs_per_block: tuple[int, ...] = (2, 2, 4, 4, 4)
    seed: int = 20200808
    weights_path: str | None = None
    # random weights only: relative mean magnitude of each tap after calibration.
    # The inverse of the perceptual stage weights, so every stage pulls about equally.
    tap_scales: tuple[float, ...] = (32.0, 16.0, 8.0, 4.0, 1.0)


class FeatureBackbone(nn.Module):
    """Frozen VGG-layout network; returns the first ReLU of each of its five blocks.

    With ``weights_path`` pointing to torchvision VGG19 weights and the VGG19
    widths, this is the usual perceptual-loss network. Without weights it is a
    fixed, seeded random-feature network of the same layout.
    """

    def __init__(self, spec: BackboneSpec = BackboneSpec()):
        super().__init__()
        self.spec = spec
        layers, self.taps = [], []
        prev = 3
        for b, (width, n_conv) in enumerate(zip(spec.widths, spec.convs_per_block)):
            if b:
                layers.append(nn.MaxPool2d(2, 2, ceil_mode=True))
            for k in range(n_conv):
                layers += [nn.Conv2d(prev, width, 3, padding=1), nn.ReLU()]
                prev = width
                if k == 0:
                    self.taps.append(len(layers) - 1)
        self.features = nn.Sequential(*layers)
        self.register_buffer("mean", torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(IMAGENET_STD).view(1, 3, 1, 1))
        if spec.weights_path:
            state = torch.load(spec.weights_path, map_location="cpu")
            state = {k[len("features."):]: v for k, v in state.items() if k.startswith("features.")}
            self.features.load_state_dict(state)
        else:
            with torch.random.fork_rng():
                torch.manual_seed(spec.seed)
                for m in self.features:
                    if isinstance(m, nn.Conv2d):
                        nn.init.kaiming_normal_(m.weight, nonlinearity="relu")
                        nn.init.zeros_(m.bias)
                self._calibrate_random()
        self.requires_grad_(False)
        self.eval()

    @torch.no_grad()
    def _calibrate_random(self):
        # Unstructured 3x3 kernels respond mostly to pixel noise. Restrict each kernel to
        # blur and first derivatives, give every conv unit output std on 1/f images, then
        # rescale block inputs so tap magnitudes follow spec.tap_scales.
        g = torch.tensor([1.0, 2.0, 1.0]) / 4
        d = torch.tensor([-1.0, 0.0, 1.0]) / 2
        basis = torch.stack([torch.outer(g, g), torch.outer(g, d), torch.outer(d, g)]).view(3, 9)
        q, _ = torch.linalg.qr(basis.T)
        proj = q @ q.T
        x = (_pink_noise(8, 64, 64) - self.mean) / self.std
        for m in self.features:
            if isinstance(m, nn.Conv2d):
                m.weight.copy_((m.weight.view(-1, 9) @ proj).view_as(m.weight))
                m.weight.div_(m(x).std())
            x = m(x)
        scales = self.spec.tap_scales
        gains = [scales[0]] + [scales[k] / scales[k - 1] for k in range(1, len(scales))]
        firsts = [self.features[t - 1] for t in self.taps]
        for conv, gain in zip(firsts, gains):
            conv.weight.mul_(gain)

    def train(self, mode: bool = True):
        # always frozen
        return super().train(False)

    def forward(self, x) -> list[torch.Tensor]:
        """``x`` is an image batch in [0, 1]."""
        x = (x - self.mean.to(x.dtype)) / self.std.to(x.dtype)
        out = []
        last = self.taps[-1]
        for i, layer in enumerate(self.features):
            x = layer(x)
            if i in self.taps:
                out.append(x)
            if i == last:
                break
        return out

    @classmethod
    def vgg19(cls, weights_path: str | None = None) -> FeatureBackbone:
        return cls(BackboneSpec(widths=(64, 128, 256, 512, 512), convs_per_block=(2, 2, 4, 4, 4),
                                weights_path=weights_path))


_DEFAULT_BACKBONE: FeatureBackbone | None = None


def default_backbone() -> FeatureBackbone:
    global _DEFAULT_BACKBONE
    if _DEFAULT_BACKBONE is None:
        _DEFAULT_BACKBONE = FeatureBackbone()
    return _DEFAULT_BACKBONE
