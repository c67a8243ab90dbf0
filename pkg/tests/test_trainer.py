import csv
import hashlib

import numpy as np
import pytest
import torch

from posevid.datapipe import build_synthetic_dataset
from posevid.trainer import (
    ABLATIONS,
    ConfigError,
    TrainConfig,
    TrainingDiverged,
    _StageRunner,
    ablation_config,
    latest_checkpoint,
    load_checkpoint,
    lr_at,
    train_stage1,
    train_stage2,
)

# small enough to take a few hundred milliseconds per step
TINY = dict(base_width=8, num_downsamples=2, num_residual_blocks=1, d_width=8, d_layers=2,
            resolutions=((32, 32),))


@pytest.fixture(scope="module")
def dataset():
    return build_synthetic_dataset(0, 30, (32, 32), num_unpaired=2, unpaired_frames=12)


def tiny(**kw):
    return TrainConfig(**{**TINY, **kw})


def digest(module):
    h = hashlib.sha256()
    for k, v in sorted(module.state_dict().items()):
        h.update(k.encode())
        h.update(v.detach().cpu().numpy().tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------- schedule and config

def test_lr_schedule_examples():
    cfg = TrainConfig(steps=1000)
    assert lr_at(0, cfg) == 0.0002
    assert lr_at(500, cfg) == 0.0002
    assert lr_at(750, cfg) == pytest.approx(0.0001)
    assert lr_at(1000, cfg) == 0.0


def test_lr_monotone_nonincreasing():
    cfg = TrainConfig(steps=37)
    lrs = [lr_at(s, cfg) for s in range(38)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))
    with pytest.raises(ValueError):
        lr_at(-1, cfg)


def test_config_invariants():
    with pytest.raises(ConfigError):
        TrainConfig(K=-1)
    with pytest.raises(ConfigError):
        TrainConfig(M=0)
    with pytest.raises(ConfigError):
        TrainConfig(resolutions=((32, 32), (48, 48)))
    with pytest.raises(ConfigError):
        TrainConfig(steps=10, resolutions=((32, 32), (64, 64)), steps_per_resolution=(3, 3))


def test_config_roundtrip(tmp_path):
    cfg = ablation_config("PL-Stage1-DA", TrainConfig(steps=7, resolutions=((32, 64), (64, 128))))
    cfg.save(tmp_path / "c.json")
    assert TrainConfig.from_file(tmp_path / "c.json") == cfg


def test_config_rejects_unknown_fields_and_versions():
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"version": 99})


def test_ablation_rows():
    assert list(ABLATIONS) == ["PL-Stage1", "PL-Stage1-DA", "PL-Stage1-DA-F", "PL-Stage2", "PL-UL-Stage2"]
    base = ablation_config("PL-Stage1")
    assert not any(base.flags.values())
    full = ablation_config("PL-UL-Stage2")
    assert all(full.flags.values())
    with pytest.raises(ConfigError):
        ablation_config("nope")


def test_overrides_reach_nested_weights():
    cfg = TrainConfig().with_overrides(lambda_fm=3.0, steps=5)
    assert cfg.weights.lambda_fm == 3.0 and cfg.steps == 5


# ---------------------------------------------------------------- training

def test_seeded_runs_are_identical(dataset):
    a = train_stage1(tiny(steps=10), dataset, 3)
    b = train_stage1(tiny(steps=10), dataset, 3)
    assert a.history == b.history
    assert digest(a.generator) == digest(b.generator)


def test_unpaired_interleaving_and_branch_isolation(dataset):
    ckpt = train_stage1(tiny(steps=9, unpaired_ratio=3), dataset, 0)
    branches = [r["branch"] for r in ckpt.history]
    assert branches == (["paired"] * 3 + ["unpaired"]) * 3
    for r in ckpt.history:
        if r["branch"] == "unpaired":
            assert r["vgg"] == 0 and r["fm_paired"] == 0 and r["fm_temporal"] == 0 and r["adv_paired"] == 0
            assert r["adv_unpaired"] > 0
        else:
            assert r["adv_unpaired"] == 0 and r["vgg"] > 0


def test_unpaired_off_never_runs_branch(dataset):
    ckpt = train_stage1(tiny(steps=6, unpaired=False), dataset, 0)
    assert {r["branch"] for r in ckpt.history} == {"paired"}
    assert "unpaired" not in ckpt.discriminators


def test_unpaired_flag_without_wild_data():
    ds = build_synthetic_dataset(0, 20, (32, 32), num_unpaired=0)
    with pytest.raises(ConfigError):
        train_stage1(tiny(steps=2), ds, 0)


def test_past_only_config_runs(dataset):
    ckpt = train_stage1(ablation_config("PL-Stage1", tiny(steps=3)), dataset, 0)
    assert ckpt.step == 3 and not ckpt.config.future_frames


def test_resume_is_bit_compatible(dataset, tmp_path):
    cfg = tiny(steps=8, checkpoint_every=4)
    full = train_stage1(cfg, dataset, 1)
    half = train_stage1(cfg, dataset, 1, out_dir=tmp_path, max_steps=4)
    resumed = train_stage1(cfg, dataset, 1, resume=load_checkpoint(tmp_path / "stage1"))
    assert resumed.history == full.history
    assert digest(resumed.generator) == digest(full.generator)
    assert half.step == 4


def test_checkpoint_layout_and_loss_csv(dataset, tmp_path):
    train_stage1(tiny(steps=4, checkpoint_every=2, unpaired=False), dataset, 0, out_dir=tmp_path)
    d = tmp_path / "stage1"
    assert sorted(p.name for p in d.glob("ckpt_*.pt")) == ["ckpt_000002.pt", "ckpt_000004.pt"]
    assert latest_checkpoint(d).name == "ckpt_000004.pt"
    assert not list(d.glob("*.tmp"))
    rows = list(csv.DictReader(open(d / "losses.csv")))
    assert len(rows) == 4 and {"step", "vgg", "fm_paired", "total_G", "total_D_p"} <= set(rows[0])
    ckpt = load_checkpoint(d)
    assert ckpt.generator.spec.in_channels == 70 and ckpt.step == 4


def test_progressive_growth_stays_finite(dataset):
    cfg = tiny(steps=4, resolutions=((16, 16), (32, 32)), unpaired=False)
    ckpt = train_stage1(cfg, dataset, 0)
    assert ckpt.resolution == (32, 32)
    assert [r["resolution"] for r in ckpt.history] == ["16x16"] * 2 + ["32x32"] * 2
    assert all(np.isfinite(v) for r in ckpt.history for v in r.values() if isinstance(v, float))


def test_stage2_freezes_stage1(dataset, tmp_path):
    cfg = tiny(steps=3, stage2_steps=4)
    c1 = train_stage1(cfg, dataset, 0)
    before = digest(c1.generator)
    c2 = train_stage2(cfg, dataset, c1, 0, out_dir=tmp_path)
    assert digest(c1.generator) == before
    assert not c1.generator.training
    assert c2.discriminators["paired"].spec.condition_channels == 15
    assert c2.generator.spec.in_channels == 15
    reloaded = load_checkpoint(tmp_path / "stage2")
    assert digest(reloaded.stage1.generator) == before


def test_stage2_refuses_when_disabled(dataset):
    cfg = tiny(steps=2, stage2=False)
    c1 = train_stage1(cfg, dataset, 0)
    with pytest.raises(ConfigError):
        train_stage2(cfg, dataset, c1, 0)
    with pytest.raises(ConfigError):
        train_stage2(tiny(), dataset, None, 0)


def test_divergence_aborts_with_last_good(dataset, monkeypatch):
    cfg = tiny(steps=6, checkpoint_every=2, unpaired=False)
    original = _StageRunner.paired_step

    def flaky(self):
        if self.step == 3:
            with torch.no_grad():
                next(self.G.parameters()).fill_(float("nan"))
        return original(self)

    monkeypatch.setattr(_StageRunner, "paired_step", flaky)
    with pytest.raises(TrainingDiverged) as info:
        train_stage1(cfg, dataset, 0)
    assert info.value.last_good is not None and info.value.last_good.step == 2
