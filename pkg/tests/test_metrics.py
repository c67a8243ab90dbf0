import csv

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from skimage.metrics import structural_similarity

from posevid.datapipe import write_frames
from posevid.metrics import (
    MetricError,
    MetricsReport,
    evaluate_frames,
    evaluate_run,
    extract_features,
    fid,
    perceptual_distance,
    ssim,
    trace_sqrt_product,
    write_ablation_report,
)


def skimage_ssim(a, b):
    return structural_similarity(a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
                                 data_range=1.0, channel_axis=-1)


def scipy_fid(a, b, eps=1e-6):
    d = a.shape[1]
    sa = np.cov(a, rowvar=False) + eps * np.eye(d)
    sb = np.cov(b, rowvar=False) + eps * np.eye(d)
    diff = a.mean(0) - b.mean(0)
    return float(diff @ diff + np.trace(sa + sb - 2 * scipy.linalg.sqrtm(sa @ sb).real))


# ---------------------------------------------------------------- ssim

def test_ssim_identity():
    x = np.random.default_rng(0).random((32, 32, 3))
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-9)


def test_ssim_constant_images():
    assert ssim(np.zeros((32, 32, 3)), np.ones((32, 32, 3))) == pytest.approx(1.0e-4, abs=1e-6)
    assert ssim(np.zeros((32, 32, 3)), np.ones((32, 32, 3))) == pytest.approx(1e-4 / (1 + 1e-4), abs=1e-12)


def test_ssim_matches_reference_implementation():
    rng = np.random.default_rng(1)
    for _ in range(5):
        a = rng.random((40, 48, 3))
        b = np.clip(a + rng.normal(0, 0.2, a.shape), 0, 1)
        assert ssim(a, b) == pytest.approx(skimage_ssim(a, b), abs=1e-10)


def test_ssim_resolution_mismatch():
    with pytest.raises(MetricError):
        ssim(np.zeros((8, 8, 3)), np.zeros((8, 9, 3)))


@settings(max_examples=20, deadline=None)
@given(arrays(np.float64, (16, 16, 3), elements=st.floats(0, 1)), arrays(np.float64, (16, 16, 3), elements=st.floats(0, 1)))
def test_ssim_symmetric_and_bounded(a, b):
    s = ssim(a, b)
    assert abs(s - ssim(b, a)) <= 1e-12
    assert -1 - 1e-12 <= s <= 1 + 1e-12


# ---------------------------------------------------------------- fid

def test_fid_identical_sets():
    a = np.random.default_rng(2).normal(size=(200, 8))
    assert fid(a, a) <= 1e-6


def test_fid_matches_scipy_sqrtm():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(300, 6))
    b = rng.normal(size=(300, 6)) @ rng.random((6, 6)) + 0.5
    assert fid(a, b) == pytest.approx(scipy_fid(a, b), rel=1e-8)


def test_fid_gaussian_shift():
    rng = np.random.default_rng(4)
    mu = np.array([1.0, -0.5, 0.25, 0.0, 2.0, 0.5, -1.0, 0.75])
    a = rng.normal(size=(10_000, 8))
    b = rng.normal(size=(10_000, 8)) + mu
    assert fid(a, b) == pytest.approx(mu @ mu, rel=0.05)


def test_fid_symmetric():
    rng = np.random.default_rng(5)
    a, b = rng.normal(size=(100, 5)), rng.normal(size=(120, 5)) * 2
    assert abs(fid(a, b) - fid(b, a)) <= 1e-8


def test_fid_degenerate_without_regularization():
    a = np.random.default_rng(6).normal(size=(4, 8))
    with pytest.raises(MetricError):
        fid(a, a, eps=None)
    assert fid(a, a) <= 1e-6


def test_fid_refuses_single_sample():
    with pytest.raises(MetricError):
        fid(np.zeros((1, 4)), np.zeros((5, 4)))


def test_trace_sqrt_of_diagonal_product():
    a, b = np.diag([1.0, 4.0, 9.0]), np.diag([4.0, 1.0, 1.0])
    assert trace_sqrt_product(a, b) == pytest.approx(2 + 2 + 3)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_fid_nonnegative_and_symmetric(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(30, 4)), rng.normal(size=(25, 4)) * rng.uniform(0.5, 2)
    assert fid(a, b) >= 0
    assert abs(fid(a, b) - fid(b, a)) <= 1e-8


# ---------------------------------------------------------------- perceptual distance

def test_perceptual_distance_identity_and_symmetry():
    rng = np.random.default_rng(7)
    a, b = rng.random((32, 32, 3)).astype(np.float32), rng.random((32, 32, 3)).astype(np.float32)
    assert perceptual_distance(a, a) == pytest.approx(0.0, abs=1e-9)
    assert perceptual_distance(a, b) == pytest.approx(perceptual_distance(b, a), rel=1e-6)
    assert perceptual_distance(a, b) > 0


def test_perceptual_distance_grows_with_corruption():
    rng = np.random.default_rng(8)
    a = rng.random((32, 32, 3)).astype(np.float32)
    near = np.clip(a + rng.normal(0, 0.05, a.shape), 0, 1).astype(np.float32)
    far = np.clip(a + rng.normal(0, 0.4, a.shape), 0, 1).astype(np.float32)
    assert perceptual_distance(a, near) < perceptual_distance(a, far)


def test_features_shape():
    f = extract_features(np.random.default_rng(9).random((3, 32, 32, 3)))
    assert f.shape == (3, 64)


# ---------------------------------------------------------------- reports

def _frames(n, seed=0):
    return np.random.default_rng(seed).random((n, 32, 32, 3)).astype(np.float32)


def test_evaluate_identical_frames(tmp_path):
    f = _frames(4)
    write_frames(tmp_path / "a", f)
    write_frames(tmp_path / "b", f)
    report = evaluate_run(tmp_path / "a", tmp_path / "b", tmp_path / "m.csv")
    assert report.ssim_mean == pytest.approx(1.0, abs=1e-9)
    assert report.perceptual_mean == pytest.approx(0.0, abs=1e-9)
    assert report.fid <= 1e-6
    rows = list(csv.DictReader(open(tmp_path / "m.csv")))
    assert [r["frame"] for r in rows] == ["000000.png", "000001.png", "000002.png", "000003.png", "mean", "std"]
    assert all(r["fid"] == "" for r in rows if r["frame"] != "mean")
    assert float(rows[-2]["fid"]) <= 1e-6


def test_single_frame_refuses_fid():
    f = _frames(1)
    r = evaluate_frames(f, f)
    assert r.fid is None and r.ssim_mean == pytest.approx(1.0)


def test_count_mismatch(tmp_path):
    write_frames(tmp_path / "a", _frames(2))
    write_frames(tmp_path / "b", _frames(3))
    with pytest.raises(MetricError):
        evaluate_run(tmp_path / "a", tmp_path / "b")


def test_ablation_report_rows(tmp_path):
    names = ["PL-Stage1", "PL-Stage1-DA", "PL-Stage1-DA-F", "PL-Stage2", "PL-UL-Stage2"]
    r = MetricsReport(["0"], np.array([0.9]), np.array([0.1]), 1.0)
    write_ablation_report({n: r for n in names}, tmp_path / "t.csv")
    rows = list(csv.DictReader(open(tmp_path / "t.csv")))
    assert [row["config"] for row in rows] == names
