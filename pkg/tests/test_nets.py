import numpy as np
import pytest
import torch

from posevid.nets import (
    BackboneSpec,
    DiscriminatorSpec,
    FeatureBackbone,
    GeneratorSpec,
    build_discriminator,
    build_generator,
    default_backbone,
    generator_forward,
)

TINY = dict(base_width=8, num_residual_blocks=1, num_downsamples=2, resolution=(16, 16))


def test_stage_channel_formulas():
    assert GeneratorSpec.for_stage(1, 2, 14).in_channels == 70
    assert GeneratorSpec.for_stage(2, 2, 14).in_channels == 15


def test_forward_shape_and_range():
    G = build_generator(GeneratorSpec.for_stage(1, 2), 0).eval()
    with torch.no_grad():
        y = generator_forward(G, torch.zeros(5, 14, 64, 64))
    assert y.shape == (3, 64, 64)
    assert y.abs().max() <= 1


def test_forward_rejects_wrong_layout():
    G = build_generator(GeneratorSpec.for_stage(1, 2, **TINY), 0)
    with pytest.raises(ValueError):
        generator_forward(G, torch.zeros(3, 14, 16, 16))
    with pytest.raises(ValueError):
        G(torch.zeros(1, 71, 16, 16))


def test_eval_determinism():
    G = build_generator(GeneratorSpec.for_stage(1, 2, **TINY), 3).eval()
    x = torch.rand(2, 5, 14, 16, 16)
    with torch.no_grad():
        assert torch.equal(generator_forward(G, x), generator_forward(G, x.clone()))


def test_seeded_init_reproducible():
    spec = GeneratorSpec.for_stage(1, 2, **TINY)
    a, b, c = build_generator(spec, 1), build_generator(spec, 1), build_generator(spec, 2)
    for (k, va), vb, vc in zip(a.state_dict().items(), b.state_dict().values(), c.state_dict().values()):
        assert torch.equal(va, vb)
    assert any(not torch.equal(va, vc) for va, vc in zip(a.state_dict().values(), c.state_dict().values()))


def test_stage_generators_differ_only_in_input_layer():
    g1 = build_generator(GeneratorSpec.for_stage(1, 2, **TINY), 0)
    g2 = build_generator(GeneratorSpec.for_stage(2, 2, **TINY), 0)
    s1, s2 = g1.state_dict(), g2.state_dict()
    assert s1.keys() == s2.keys()
    for k in s1:
        if k not in g1.input_layer_names():
            assert s1[k].shape == s2[k].shape, k
    assert s1["global_net.body.1.weight"].shape[1] == 70 and s2["global_net.body.1.weight"].shape[1] == 15


def test_input_gradient_nonzero_for_every_slice():
    torch.manual_seed(0)
    G = build_generator(GeneratorSpec.for_stage(1, 1, n_parts=2, **TINY), 0)
    x = torch.rand(1, 3, 2, 16, 16, requires_grad=True)
    generator_forward(G, x).sum().backward()
    per_slice = x.grad.abs().sum(dim=(0, 2, 3, 4))
    assert (per_slice > 0).all()
    # finite-difference probe agrees in sign and magnitude on one input pixel
    G.eval()
    with torch.no_grad():
        e = torch.zeros_like(x)
        e[0, 0, 0, 8, 8] = 1e-3
        fd = (generator_forward(G, x + e).sum() - generator_forward(G, x - e).sum()) / 2e-3
    x2 = x.detach().clone().requires_grad_(True)
    generator_forward(G, x2).sum().backward()
    assert float(fd) == pytest.approx(float(x2.grad[0, 0, 0, 8, 8]), rel=0.05, abs=1e-4)


@pytest.mark.parametrize("future, center", [(True, 2), (False, 4)])
def test_stage2_starts_as_identity_on_current_frame(future, center):
    spec = GeneratorSpec.for_stage(2, 2, future=future, **TINY)
    assert spec.residual_slice == center
    G = build_generator(spec, 0)
    x = torch.rand(2, 5, 3, 16, 16) * 1.8 - 0.9
    assert torch.equal(generator_forward(G, x), x[:, center])
    G.grow(seed=1)
    x = torch.rand(1, 5, 3, 32, 32) * 1.8 - 0.9
    assert torch.equal(generator_forward(G, x), x[:, center])


def test_stage2_residual_output_stays_in_range():
    G = build_generator(GeneratorSpec.for_stage(2, 1, **TINY), 0)
    with torch.no_grad():
        G.global_net.head[1].bias.fill_(5.0)
    with torch.no_grad():
        out = generator_forward(G, torch.ones(1, 3, 3, 16, 16) * 0.9)
    assert float(out.max()) == 1.0 and float(out.min()) >= -1.0


def test_residual_slice_validation():
    with pytest.raises(ValueError):
        GeneratorSpec.for_stage(1, 2, residual_slice=0, **TINY)
    with pytest.raises(ValueError):
        GeneratorSpec.for_stage(2, 2, residual_slice=5, **TINY)
    assert GeneratorSpec.for_stage(2, 2, residual_slice=None, **TINY).residual_slice is None


def test_progressive_growth_doubles_resolution():
    G = build_generator(GeneratorSpec.for_stage(1, 2, base_width=16, num_residual_blocks=1, num_downsamples=2,
                                                resolution=(16, 16)), 0)
    for res in (32, 64):
        G.grow(seed=res)
        assert G.spec.resolution == (res, res)
        assert G(torch.rand(1, 70, res, res)).shape == (1, 3, res, res)
    assert G.spec.num_enhancers == 2


def test_discriminator_channel_rules():
    assert DiscriminatorSpec.paired(1, 2, 14).total_input_channels == 17
    assert DiscriminatorSpec.paired(2, 2, 14).condition_channels == 15
    assert DiscriminatorSpec.unpaired(14).condition_channels == 14
    t = DiscriminatorSpec.temporal(3)
    assert t.condition_channels == 0 and t.input_channels == 9 and t.num_scales == 1
    with pytest.raises(ValueError):
        DiscriminatorSpec(kind="temporal", condition_channels=3, input_channels=9)


def test_discriminator_outputs_patch_maps_per_scale():
    D = build_discriminator(DiscriminatorSpec.paired(1, 2, 14, num_scales=2), 0)
    feats = D(torch.rand(2, 3, 64, 64), torch.rand(2, 14, 64, 64))
    assert len(feats) == 2
    for scale in feats:
        assert len(scale) == 5
        assert scale[-1].dim() == 4 and scale[-1].shape[1] == 1 and scale[-1].shape[-1] > 1
    assert feats[1][-1].shape[-1] < feats[0][-1].shape[-1]


def test_discriminator_every_scale_sees_condition():
    D = build_discriminator(DiscriminatorSpec.paired(1, 2, 14, num_scales=3), 0)
    x = torch.rand(1, 3, 64, 64)
    c1, c2 = torch.zeros(1, 14, 64, 64), torch.ones(1, 14, 64, 64)
    for a, b in zip(D.scores(x, c1), D.scores(x, c2)):
        assert not torch.equal(a, b)


def test_discriminator_condition_contract():
    D = build_discriminator(DiscriminatorSpec.paired(1, 2, 14), 0)
    with pytest.raises(ValueError):
        D(torch.rand(1, 3, 32, 32))
    Dt = build_discriminator(DiscriminatorSpec.temporal(3), 0)
    with pytest.raises(ValueError):
        Dt(torch.rand(1, 9, 32, 32), torch.rand(1, 14, 32, 32))


def test_backbone_frozen_and_five_stages():
    bb = default_backbone()
    bb.train()
    assert not bb.training
    assert all(not p.requires_grad for p in bb.parameters())
    feats = bb(torch.rand(1, 3, 64, 64))
    assert [f.shape[1] for f in feats] == list(BackboneSpec().widths)
    assert [f.shape[-1] for f in feats] == [64, 32, 16, 8, 4]


def test_random_backbone_kernels_are_smooth_and_taps_balanced():
    from posevid.nets import _pink_noise

    bb = FeatureBackbone()
    g = torch.tensor([1.0, 2.0, 1.0]) / 4
    d = torch.tensor([-1.0, 0.0, 1.0]) / 2
    basis = torch.stack([torch.outer(g, g), torch.outer(g, d), torch.outer(d, g)]).view(3, 9).double()
    for m in bb.features:
        if isinstance(m, torch.nn.Conv2d):
            w = m.weight.detach().double().view(-1, 9)
            coef = torch.linalg.lstsq(basis.T, w.T).solution
            assert torch.allclose(coef.T @ basis, w, atol=1e-5)
    with torch.random.fork_rng():
        torch.manual_seed(123)
        x = _pink_noise(4, 64, 64)
    mags = [float(f.abs().mean()) for f in bb(x)]
    scales = BackboneSpec().tap_scales
    for k in range(1, 5):
        ratio = (mags[k - 1] / mags[k]) / (scales[k - 1] / scales[k])
        assert 0.5 < ratio < 2.0, (k, mags)


def test_backbone_deterministic_from_seed():
    a, b = FeatureBackbone(), FeatureBackbone()
    x = torch.rand(1, 3, 32, 32)
    for fa, fb in zip(a(x), b(x)):
        assert torch.equal(fa, fb)


def test_vgg19_layout_loads_local_weights(tmp_path):
    import torchvision

    vgg = torchvision.models.vgg19(weights=None)
    torch.save(vgg.state_dict(), tmp_path / "vgg19.pth")
    bb = FeatureBackbone.vgg19(str(tmp_path / "vgg19.pth"))
    assert torch.equal(bb.features[0].weight, vgg.features[0].weight)
    assert np.array_equal([f.shape[1] for f in bb(torch.rand(1, 3, 32, 32))], [64, 128, 256, 512, 512])
