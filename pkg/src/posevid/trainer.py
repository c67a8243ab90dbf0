"""Two-stage training: schedules, paired/unpaired branch interleaving, progressive growth, checkpoints."""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import zlib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from .augment import AugmentConfig
from .datapipe import PoseVideoDataset, sample_paired_batch, sample_unpaired_batch
from .nets import (
    Discriminator,
    DiscriminatorSpec,
    FeatureBackbone,
    Generator,
    GeneratorSpec,
    build_discriminator,
    build_generator,
    default_backbone,
)
from .objectives import (
    REPORT_TERMS,
    LossWeights,
    NonFiniteLossError,
    feature_matching_from_features,
    gan_d_loss,
    gan_g_loss,
    perceptual_loss,
    stack_frames,
    total_generator_loss,
)
from .pose_core import CorpusStats, SkeletonTopology, corpus_stats

log = logging.getLogger(__name__)

CONFIG_VERSION = 1
CHECKPOINT_FORMAT = "posevid.checkpoint"
CHECKPOINT_VERSION = 1

ABLATIONS = {
    "PL-Stage1": dict(data_aug=False, future_frames=False, stage2=False, unpaired=False),
    "PL-Stage1-DA": dict(data_aug=True, future_frames=False, stage2=False, unpaired=False),
    "PL-Stage1-DA-F": dict(data_aug=True, future_frames=True, stage2=False, unpaired=False),
    "PL-Stage2": dict(data_aug=True, future_frames=True, stage2=True, unpaired=False),
    "PL-UL-Stage2": dict(data_aug=True, future_frames=True, stage2=True, unpaired=True),
}


class ConfigError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    def __init__(self, message, last_good: Checkpoint | None):
        super().__init__(message)
        self.last_good = last_good


@dataclass(frozen=True)
class TrainConfig:
    K: int = 2
    M: int = 3
    weights: LossWeights = LossWeights()
    lr_initial: float = 0.0002
    betas: tuple[float, float] = (0.5, 0.999)
    # paired steps per stage; unpaired steps come on top
    steps: int = 2000
    stage2_steps: int = 1000
    resolutions: tuple[tuple[int, int], ...] = ((64, 64),)
    steps_per_resolution: tuple[int, ...] | None = None
    batch_size: int = 1
    unpaired_ratio: int = 3
    data_aug: bool = True
    future_frames: bool = True
    stage2: bool = True
    unpaired: bool = True
    augment: AugmentConfig = AugmentConfig()
    thickness: float | None = None
    base_width: int = 32
    num_downsamples: int = 3
    num_residual_blocks: int = 4
    d_scales: int = 2
    d_width: int = 32
    d_layers: int = 3
    temporal_d_scales: int = 1
    checkpoint_every: int = 0
    ablation: str | None = None

    def __post_init__(self):
        if self.K < 0:
            raise ConfigError("K must be >= 0")
        if self.M < 1:
            raise ConfigError("M must be >= 1")
        if self.batch_size < 1 or self.unpaired_ratio < 1:
            raise ConfigError("batch_size and unpaired_ratio must be >= 1")
        res = tuple(tuple(int(v) for v in r) for r in self.resolutions)
        object.__setattr__(self, "resolutions", res)
        for a, b in zip(res, res[1:]):
            if b != (2 * a[0], 2 * a[1]):
                raise ConfigError("each progressive resolution must double the previous one")
        if self.steps_per_resolution is not None:
            spr = tuple(int(s) for s in self.steps_per_resolution)
            if len(spr) != len(res) or sum(spr) != self.steps:
                raise ConfigError("steps_per_resolution must have one entry per resolution and sum to steps")
            object.__setattr__(self, "steps_per_resolution", spr)
        object.__setattr__(self, "betas", tuple(self.betas))

    @property
    def flags(self) -> dict[str, bool]:
        return dict(data_aug=self.data_aug, future_frames=self.future_frames, stage2=self.stage2,
                    unpaired=self.unpaired)

    def resolution_boundaries(self) -> list[int]:
        """Paired step at which each resolution starts."""
        n = len(self.resolutions)
        spr = self.steps_per_resolution or tuple(self.steps // n + (i < self.steps % n) for i in range(n))
        return [int(v) for v in np.cumsum((0,) + spr[:-1])]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["version"] = CONFIG_VERSION
        return d

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        d = dict(d)
        version = d.pop("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {version}")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(sorted(unknown))}")
        if isinstance(d.get("weights"), dict):
            d["weights"] = LossWeights(**d["weights"])
        if isinstance(d.get("augment"), dict):
            d["augment"] = AugmentConfig(**d["augment"])
        if "resolutions" in d:
            d["resolutions"] = tuple(tuple(r) for r in d["resolutions"])
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> TrainConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    def with_overrides(self, **overrides) -> TrainConfig:
        nested = {}
        for k in list(overrides):
            if k in ("lambda_vgg", "lambda_fm", "gan_flavor"):
                nested.setdefault("weights", {})[k] = overrides.pop(k)
        if "weights" in nested:
            overrides["weights"] = replace(self.weights, **nested["weights"])
        return replace(self, **overrides)


def ablation_config(name: str, base: TrainConfig | None = None) -> TrainConfig:
    if name not in ABLATIONS:
        raise ConfigError(f"unknown ablation {name!r}; choose from {', '.join(ABLATIONS)}")
    return replace(base or TrainConfig(), ablation=name, **ABLATIONS[name])


def lr_at(step: int, config: TrainConfig, total: int | None = None) -> float:
    """Constant for the first half of ``total`` steps, then linear decay to 0 at ``total``."""
    if step < 0:
        raise ValueError("step must be >= 0")
    total = config.steps if total is None else total
    if total <= 0:
        return config.lr_initial
    half = total / 2.0
    if step <= half:
        return config.lr_initial
    return config.lr_initial * max(total - step, 0) / (total - half)


def _sub_seed(seed: int, name: str) -> int:
    return int(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]).generate_state(1)[0])


# ---------------------------------------------------------------- checkpoints

@dataclass
class Checkpoint:
    stage: int
    step: int
    generator: Generator
    discriminators: dict[str, Discriminator]
    config: TrainConfig
    seed: int
    topology: SkeletonTopology
    unpaired_steps: int = 0
    optimizer_states: dict = field(default_factory=dict)
    history: list[dict] = field(default_factory=list)
    corpus: CorpusStats | None = None
    stage1: Checkpoint | None = None
    rng_state: torch.Tensor | None = None

    @property
    def K(self) -> int:
        return self.config.K

    @property
    def resolution(self) -> tuple[int, int]:
        return tuple(self.generator.spec.resolution)

    def to_payload(self) -> dict:
        payload = {
            "format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
            "stage": self.stage, "step": self.step, "unpaired_steps": self.unpaired_steps, "seed": self.seed,
            "generator_spec": self.generator.spec.to_dict(),
            "generator": self.generator.state_dict(),
            "discriminator_specs": {k: d.spec.to_dict() for k, d in self.discriminators.items()},
            "discriminators": {k: d.state_dict() for k, d in self.discriminators.items()},
            "optimizers": self.optimizer_states,
            "config": self.config.to_dict(),
            "history": self.history,
            "topology": asdict(self.topology),
            "corpus": asdict(self.corpus) if self.corpus else None,
            "rng_state": self.rng_state,
        }
        if self.stage1 is not None:
            payload["stage1"] = self.stage1.to_payload()
            payload["stage1"].pop("optimizers")
        return payload

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        buf = io.BytesIO()
        torch.save(self.to_payload(), buf)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(buf.getvalue())
        os.replace(tmp, path)
        return path

    @classmethod
    def from_payload(cls, p: dict) -> Checkpoint:
        if p.get("format") != CHECKPOINT_FORMAT or p.get("version") != CHECKPOINT_VERSION:
            raise ValueError("not a supported checkpoint")
        gspec = GeneratorSpec(**p["generator_spec"])
        G = Generator(gspec)
        G.load_state_dict(p["generator"])
        Ds = {}
        for k, spec in p["discriminator_specs"].items():
            D = Discriminator(DiscriminatorSpec(**spec))
            D.load_state_dict(p["discriminators"][k])
            Ds[k] = D
        topo = p["topology"]
        topology = SkeletonTopology(**{k: (tuple(map(tuple, v)) if k == "parts" else v) for k, v in topo.items()})
        corpus = p.get("corpus")
        if corpus:
            corpus = CorpusStats(corpus["torso_length"], tuple(corpus["anchor"]),
                                 tuple(corpus["canvas"]) if corpus.get("canvas") else None)
        ckpt = cls(
            stage=p["stage"], step=p["step"], generator=G, discriminators=Ds,
            config=TrainConfig.from_dict(p["config"]), seed=p["seed"], topology=topology,
            unpaired_steps=p.get("unpaired_steps", 0), optimizer_states=p.get("optimizers", {}),
            history=list(p.get("history", [])), corpus=corpus, rng_state=p.get("rng_state"),
        )
        if "stage1" in p:
            ckpt.stage1 = cls.from_payload({**p["stage1"], "optimizers": {}})
        return ckpt


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if path.is_dir():
        path = latest_checkpoint(path)
    return Checkpoint.from_payload(torch.load(path, map_location="cpu", weights_only=False))


def latest_checkpoint(stage_dir) -> Path:
    stage_dir = Path(stage_dir)
    pointer = stage_dir / "latest"
    if not pointer.exists():
        raise FileNotFoundError(f"no 'latest' pointer in {stage_dir}")
    return stage_dir / pointer.read_text().strip()


def write_checkpoint(ckpt: Checkpoint, stage_dir) -> Path:
    """Write ``ckpt_<step>.pt`` and repoint ``latest`` (both atomically)."""
    stage_dir = Path(stage_dir)
    path = ckpt.save(stage_dir / f"ckpt_{ckpt.step:06d}.pt")
    tmp = stage_dir / "latest.tmp"
    tmp.write_text(path.name + "\n")
    os.replace(tmp, stage_dir / "latest")
    return path


def write_loss_csv(history: list[dict], path) -> None:
    columns = ["step", "branch", "resolution", "lr", *REPORT_TERMS]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        for row in history:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


# ---------------------------------------------------------------- training

def _t(x) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(x))


def _flat(x: torch.Tensor) -> torch.Tensor:
    """(N, S, C, H, W) -> (N*S, C, H, W); (N, S, W, C, H, W) window stacks flatten W into channels."""
    if x.dim() == 6:
        n, s, w, c, h, ww = x.shape
        return x.reshape(n * s, w * c, h, ww)
    n, s = x.shape[:2]
    return x.reshape(n * s, *x.shape[2:])


class _StageRunner:
    def __init__(self, stage: int, config: TrainConfig, dataset: PoseVideoDataset, seed: int,
                 g1: Generator | None = None, backbone: FeatureBackbone | None = None):
        self.stage, self.config, self.dataset, self.seed = stage, config, dataset, int(seed)
        self.g1 = g1
        self.backbone = backbone or default_backbone()
        n_s = dataset.topology.n_parts
        K = config.K
        flavor_sigmoid = config.weights.gan_flavor == "log"
        if stage == 1:
            res0 = config.resolutions[0]
        else:
            res0 = tuple(g1.spec.resolution)
        gspec = GeneratorSpec.for_stage(stage, K, n_s, future=config.future_frames,
                                        base_width=config.base_width, num_residual_blocks=config.num_residual_blocks,
                                        num_downsamples=config.num_downsamples, resolution=res0)
        self.G = build_generator(gspec, _sub_seed(seed, f"G{stage}"))
        dkw = dict(num_scales=config.d_scales, base_width=config.d_width, num_layers=config.d_layers,
                   sigmoid=flavor_sigmoid)
        tkw = dict(dkw, num_scales=config.temporal_d_scales)
        self.D = {
            "paired": build_discriminator(DiscriminatorSpec.paired(stage, K, n_s, **dkw), _sub_seed(seed, f"Dp{stage}")),
            "temporal": build_discriminator(DiscriminatorSpec.temporal(config.M, **tkw), _sub_seed(seed, f"Dt{stage}")),
        }
        if config.unpaired:
            self.D["unpaired"] = build_discriminator(DiscriminatorSpec.unpaired(n_s, **dkw), _sub_seed(seed, f"Dw{stage}"))
        self._make_optimizers()
        self.step = 0
        self.unpaired_steps = 0
        self.history: list[dict] = []
        self.stage1: Checkpoint | None = None

    def _make_optimizers(self):
        c = self.config
        self.opt_G = torch.optim.Adam(self.G.parameters(), lr=c.lr_initial, betas=c.betas)
        self.opt_D = {k: torch.optim.Adam(d.parameters(), lr=c.lr_initial, betas=c.betas) for k, d in self.D.items()}

    @property
    def total_steps(self) -> int:
        return self.config.steps if self.stage == 1 else self.config.stage2_steps

    @property
    def resolution(self) -> tuple[int, int]:
        return tuple(self.G.spec.resolution)

    def _set_lr(self, lr):
        for opt in [self.opt_G, *self.opt_D.values()]:
            for g in opt.param_groups:
                g["lr"] = lr

    def _stage_input(self, windows, support, support_index):
        """Generator input and paired-D condition for a batch of targets."""
        if self.stage == 1:
            return windows
        B, U = support.shape[:2]
        with torch.no_grad():
            out = self.g1(_flat(support))
        out = out.reshape(B, U, *out.shape[1:])
        gathered = torch.stack([out[b][support_index[b]] for b in range(B)])
        return gathered

    def _frozen(self, D):
        for p in D.parameters():
            p.requires_grad_(False)

    def _unfrozen(self, D):
        for p in D.parameters():
            p.requires_grad_(True)

    def paired_step(self) -> dict:
        c, w = self.config, self.config.weights
        lr = lr_at(self.step, c, self.total_steps)
        self._set_lr(lr)
        batch = sample_paired_batch(self.dataset, c, (self.seed, 0, self.step), with_support=self.stage == 2,
                                    resolution=self.resolution)
        windows = _t(batch.windows)
        support = _t(batch.support) if batch.support is not None else None
        sidx = _t(batch.support_index) if batch.support_index is not None else None
        inputs = self._stage_input(windows, support, sidx)  # (B, S, 2K+1, C, h, w)
        B, S = inputs.shape[:2]
        x = _flat(inputs)
        cond = _flat(_t(batch.poses)) if self.stage == 1 else x
        target01 = _flat(_t(batch.frames))
        real = target01 * 2 - 1
        fake = self.G(x)

        Dp, Dt = self.D["paired"], self.D["temporal"]
        real_seq = real.reshape(B, S, *real.shape[1:])
        fake_seq = fake.reshape(B, S, *fake.shape[1:])
        d_p = gan_d_loss(Dp.scores(real, cond), Dp.scores(fake.detach(), cond), w.gan_flavor)
        d_t = gan_d_loss(Dt.scores(stack_frames(real_seq)), Dt.scores(stack_frames(fake_seq.detach())), w.gan_flavor)
        self.opt_D["paired"].zero_grad(set_to_none=True)
        self.opt_D["temporal"].zero_grad(set_to_none=True)
        (d_p + d_t).backward()
        self.opt_D["paired"].step()
        self.opt_D["temporal"].step()

        self._frozen(Dp)
        self._frozen(Dt)
        try:
            fake_p = Dp(fake, cond)
            fake_t = Dt(stack_frames(fake_seq))
            with torch.no_grad():
                real_p = Dp(real, cond)
                real_t = Dt(stack_frames(real_seq))
            terms = {
                "adv_paired": gan_g_loss(fake_p, w.gan_flavor),
                "adv_temporal": gan_g_loss(fake_t, w.gan_flavor),
                "vgg": perceptual_loss(self.backbone, (fake + 1) / 2, target01),
                "fm_paired": feature_matching_from_features(real_p, fake_p),
                "fm_temporal": feature_matching_from_features(real_t, fake_t),
            }
            total, report = total_generator_loss(terms, w)
            self.opt_G.zero_grad(set_to_none=True)
            total.backward()
            self.opt_G.step()
        finally:
            self._unfrozen(Dp)
            self._unfrozen(Dt)
        report.total_D_p, report.total_D_t = float(d_p.detach()), float(d_t.detach())
        self._check(report)
        row = {"step": self.step, "branch": "paired", "resolution": f"{self.resolution[0]}x{self.resolution[1]}",
               "lr": lr, **report.as_dict()}
        self.history.append(row)
        self.step += 1
        return row

    def unpaired_step(self) -> dict:
        c, w = self.config, self.config.weights
        lr = lr_at(max(self.step - 1, 0), c, self.total_steps)
        self._set_lr(lr)
        ub = sample_unpaired_batch(self.dataset, c, (self.seed, 1, self.unpaired_steps), with_support=self.stage == 2,
                                   resolution=self.resolution)
        if self.stage == 1:
            x = _flat(_t(ub.windows)[:, None])
        else:
            sidx = _t(ub.support_index)[:, None]
            x = _flat(self._stage_input(None, _t(ub.support), sidx))
        wild_pose = _t(ub.poses)
        ref_pose = _t(ub.ref_poses)
        ref_frame = _t(ub.ref_frames) * 2 - 1
        fake = self.G(x)
        Dw = self.D["unpaired"]
        d_w = gan_d_loss(Dw.scores(ref_frame, ref_pose), Dw.scores(fake.detach(), wild_pose), w.gan_flavor)
        self.opt_D["unpaired"].zero_grad(set_to_none=True)
        d_w.backward()
        self.opt_D["unpaired"].step()
        self._frozen(Dw)
        try:
            # adversarial term only: no ground truth exists for wild poses
            total, report = total_generator_loss({"adv_unpaired": gan_g_loss(Dw.scores(fake, wild_pose), w.gan_flavor)}, w)
            self.opt_G.zero_grad(set_to_none=True)
            total.backward()
            self.opt_G.step()
        finally:
            self._unfrozen(Dw)
        report.total_D_w = float(d_w.detach())
        self._check(report)
        row = {"step": self.step - 1, "branch": "unpaired",
               "resolution": f"{self.resolution[0]}x{self.resolution[1]}", "lr": lr, **report.as_dict()}
        self.history.append(row)
        self.unpaired_steps += 1
        return row

    def _check(self, report):
        bad = [k for k, v in report.as_dict().items() if not np.isfinite(v)]
        if bad:
            raise NonFiniteLossError(f"non-finite loss terms at step {self.step}: {', '.join(bad)}")

    def grow(self):
        self.G.grow(_sub_seed(self.seed, f"grow{len(self.G.enhancers)}"))
        self.opt_G = torch.optim.Adam(self.G.parameters(), lr=self.config.lr_initial, betas=self.config.betas)

    # -- checkpoint plumbing
    def to_checkpoint(self) -> Checkpoint:
        return Checkpoint(
            stage=self.stage, step=self.step, generator=self.G, discriminators=self.D, config=self.config,
            seed=self.seed, topology=self.dataset.topology, unpaired_steps=self.unpaired_steps,
            optimizer_states={"G": self.opt_G.state_dict(), **{k: o.state_dict() for k, o in self.opt_D.items()}},
            history=list(self.history),
            corpus=corpus_stats([s for c in self.dataset.train for s in c.skeletons], self.dataset.topology),
            rng_state=torch.get_rng_state(), stage1=self.stage1,
        )

    def restore(self, ckpt: Checkpoint):
        import copy

        self.G = copy.deepcopy(ckpt.generator)
        self.D = {k: copy.deepcopy(d) for k, d in ckpt.discriminators.items()}
        self._make_optimizers()
        if ckpt.optimizer_states:
            self.opt_G.load_state_dict(ckpt.optimizer_states["G"])
            for k, o in self.opt_D.items():
                o.load_state_dict(ckpt.optimizer_states[k])
        self.step, self.unpaired_steps = ckpt.step, ckpt.unpaired_steps
        self.history = list(ckpt.history)
        if ckpt.rng_state is not None:
            torch.set_rng_state(ckpt.rng_state)

    def run(self, out_dir=None, progress: Callable[[dict], None] | None = None, max_steps: int | None = None):
        c = self.config
        stage_dir = Path(out_dir) / f"stage{self.stage}" if out_dir else None
        boundaries = c.resolution_boundaries() if self.stage == 1 else [0]
        stop = self.total_steps if max_steps is None else min(self.total_steps, self.step + max_steps)
        last_good = self.to_checkpoint() if self.step == 0 else None
        while self.step < stop:
            if self.stage == 1:
                level = sum(1 for b in boundaries[1:] if self.step >= b)
                while len(self.G.enhancers) < level:
                    self.grow()
            try:
                row = self.paired_step()
                if progress:
                    progress(row)
                if c.unpaired and self.step % c.unpaired_ratio == 0:
                    row = self.unpaired_step()
                    if progress:
                        progress(row)
            except NonFiniteLossError as exc:
                raise TrainingDiverged(str(exc), last_good) from exc
            if c.checkpoint_every and self.step % c.checkpoint_every == 0:
                last_good = self.to_checkpoint()
                if stage_dir:
                    write_checkpoint(last_good, stage_dir)
            if self.step % 100 == 0:
                log.info("stage %d step %d/%d %s", self.stage, self.step, self.total_steps,
                         {k: round(v, 4) for k, v in row.items() if isinstance(v, float)})
        ckpt = self.to_checkpoint()
        if stage_dir:
            write_checkpoint(ckpt, stage_dir)
            write_loss_csv(self.history, stage_dir / "losses.csv")
        return ckpt


def _check_dataset(config: TrainConfig, dataset: PoseVideoDataset):
    if not dataset.train or dataset.train_frames() == 0:
        raise ConfigError("dataset has no training frames")
    if config.unpaired and not any(len(c) for c in dataset.unpaired):
        raise ConfigError("unpaired learning is on but the dataset has no unpaired clips")


def train_stage1(config: TrainConfig, dataset: PoseVideoDataset, rng_seed: int = 0, *, out_dir=None,
                 resume: Checkpoint | None = None, progress=None, max_steps: int | None = None) -> Checkpoint:
    """Train the pose-to-video generator with its paired, temporal and (optionally) unpaired discriminators."""
    _check_dataset(config, dataset)
    runner = _StageRunner(1, config, dataset, rng_seed)
    if resume is not None:
        if resume.stage != 1:
            raise ConfigError("resume checkpoint is not a stage-1 checkpoint")
        runner.restore(resume)
    return runner.run(out_dir, progress, max_steps)


def train_stage2(config: TrainConfig, dataset: PoseVideoDataset, stage1_ckpt: Checkpoint | None, rng_seed: int = 0, *,
                 out_dir=None, resume: Checkpoint | None = None, progress=None,
                 max_steps: int | None = None) -> Checkpoint:
    """Train the refinement generator on top of a frozen stage-1 generator."""
    if not config.stage2:
        raise ConfigError("stage2 is disabled in this config")
    if stage1_ckpt is None or stage1_ckpt.stage != 1:
        raise ConfigError("stage-2 training needs a stage-1 checkpoint")
    if stage1_ckpt.config.K != config.K:
        raise ConfigError("stage-1 checkpoint was trained with a different K")
    _check_dataset(config, dataset)
    g1 = stage1_ckpt.generator
    g1.eval()
    g1.requires_grad_(False)
    runner = _StageRunner(2, config, dataset, rng_seed, g1=g1)
    if resume is not None:
        runner.restore(resume)
    runner.g1 = g1
    runner.stage1 = stage1_ckpt
    return runner.run(out_dir, progress, max_steps)
