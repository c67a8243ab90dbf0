import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from posevid.augment import AugmentConfig, augment_pose, drop_parts, perturb_joints, scale_limbs
from posevid.pose_core import BODY15, PoseSkeleton, SkeletonTopology, rasterize_channels

from conftest import standing_pose

# elbow(0) -> wrist(1) -> hand(2), rooted at the elbow
ARM = SkeletonTopology(joint_count=3, parts=((0, 1), (1, 2)), part_names=("forearm", "hand"),
                       root=0, scalable_parts=(0,))


def test_drop_prob_zero_is_identity(pose):
    assert drop_parts(pose, BODY15, 0.0, 3) == pose


def test_drop_prob_one_blanks_every_channel(pose):
    out = drop_parts(pose, BODY15, 1.0, 3)
    assert not rasterize_channels(out, BODY15, (64, 64)).any()
    assert (out.confidence == 0).all()


def test_drop_is_seeded(pose):
    assert drop_parts(pose, BODY15, 0.5, 7) == drop_parts(pose, BODY15, 0.5, 7)


def test_dropped_part_channel_is_zero_and_others_untouched(pose):
    base = rasterize_channels(pose, BODY15, (64, 64))
    for seed in range(20):
        out = drop_parts(pose, BODY15, 0.3, seed)
        maps = rasterize_channels(out, BODY15, (64, 64))
        for c in range(BODY15.n_parts):
            if c in out.dropped_parts:
                assert not maps[c].any()
            else:
                np.testing.assert_array_equal(maps[c], base[c])


def test_shared_joint_kept_while_any_owner_survives(pose):
    # find a seed dropping the right upper arm but not the right forearm
    for seed in range(500):
        out = drop_parts(pose, BODY15, 0.5, seed)
        if 2 in out.dropped_parts and 3 not in out.dropped_parts:
            assert out.confidence[3] == 1.0  # elbow still owned by the forearm
            return
    pytest.fail("no suitable seed")


def test_jitter_zero_is_identity(pose):
    assert perturb_joints(pose, 0.0, 1) == pose


def test_jitter_moments():
    s = PoseSkeleton(np.array([[500.0, 500.0, 1.0]]), canvas=(1000, 1000))
    offsets = np.array([perturb_joints(s, 2.0, seed).xy[0] - 500.0 for seed in range(10_000)])
    assert np.all(np.abs(offsets.mean(axis=0)) <= 0.1)
    assert np.all(np.abs(offsets.std(axis=0) - 2.0) <= 0.1)


def test_jitter_clips_to_canvas():
    s = PoseSkeleton(np.array([[0.0, 0.0, 1.0]]), canvas=(10, 10))
    for seed in range(50):
        x, y = perturb_joints(s, 50.0, seed).xy[0]
        assert 0 <= x <= 9 and 0 <= y <= 9
    # some seed draws a large negative offset on both axes
    assert any(tuple(perturb_joints(s, 50.0, seed).xy[0]) == (0.0, 0.0) for seed in range(50))


def test_jitter_leaves_undetected_joints_and_confidence():
    pts = np.array([[5.0, 5.0, 1.0], [7.0, 7.0, 0.0]])
    out = perturb_joints(PoseSkeleton(pts, canvas=(20, 20)), 1.0, 0)
    np.testing.assert_array_equal(out.points[1], pts[1])
    np.testing.assert_array_equal(out.confidence, pts[:, 2])


def test_scale_identity_range(pose):
    assert scale_limbs(pose, BODY15, (1.0, 1.0), 0) == pose


def test_anchored_scaling_and_rigid_descendant():
    s = PoseSkeleton(np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [1.2, 0.0, 1.0]]))
    out = scale_limbs(s, ARM, (2.0, 2.0), 0)
    np.testing.assert_allclose(out.xy, [[0, 0], [2, 0], [2.2, 0]])


def test_scaling_preserves_root_and_part_lengths(pose):
    out = scale_limbs(pose, BODY15, (0.8, 1.25), 11)
    np.testing.assert_array_equal(out.xy[1], pose.xy[1])
    for c, (a, b) in enumerate(BODY15.parts):
        before = np.linalg.norm(pose.xy[a] - pose.xy[b])
        after = np.linalg.norm(out.xy[a] - out.xy[b])
        if c in BODY15.scalable_parts:
            assert 0.8 * before - 1e-9 <= after <= 1.25 * before + 1e-9
        else:
            assert after == pytest.approx(before)


def test_augment_disabled_and_identity(pose):
    assert augment_pose(pose, BODY15, AugmentConfig(enabled=False, drop_prob=1.0), 0) == pose
    assert augment_pose(pose, BODY15, AugmentConfig.identity(), 0) == pose


def test_augment_deterministic(pose):
    cfg = AugmentConfig(drop_prob=0.3, jitter_sigma=2.0)
    assert augment_pose(pose, BODY15, cfg, 42) == augment_pose(pose, BODY15, cfg, 42)
    assert augment_pose(pose, BODY15, cfg, 42) != augment_pose(pose, BODY15, cfg, 43)


def test_config_validation():
    with pytest.raises(ValueError):
        AugmentConfig(drop_prob=1.5)
    with pytest.raises(ValueError):
        AugmentConfig(jitter_sigma=-1)
    with pytest.raises(ValueError):
        AugmentConfig(limb_scale_range=(1.2, 1.0))


def test_default_sigma_tracks_canvas_height():
    assert AugmentConfig().sigma_for(standing_pose((256, 128))) == pytest.approx(0.015 * 256)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0, 1), st.floats(0, 5), st.floats(0.5, 1.0), st.floats(1.0, 2.0))
def test_augment_invariants(seed, drop, sigma, lo, hi):
    pose = standing_pose()
    pose.frame_index = 9
    out = augment_pose(pose, BODY15, AugmentConfig(drop_prob=drop, jitter_sigma=sigma, limb_scale_range=(lo, hi)), seed)
    assert out.joint_count == pose.joint_count and out.frame_index == 9
    assert np.isfinite(out.points).all()
    # confidences only ever go to zero
    assert np.all((out.confidence == pose.confidence) | (out.confidence == 0))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.5, 2.0), st.floats(0.5, 2.0))
def test_scale_limbs_keeps_proximal_anchor(seed, lo, span):
    pose = standing_pose()
    out = scale_limbs(pose, BODY15, (lo, lo * span if span >= 1 else lo), seed)
    # joints not distal to any scalable part never move
    moved = set()
    for c in BODY15.scalable_parts:
        _, distal = BODY15.oriented_part(c)
        moved |= {distal, *BODY15.descendants(distal)}
    for j in set(range(15)) - moved:
        np.testing.assert_array_equal(out.xy[j], pose.xy[j])
