import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qdiffusion.metrics import PSNR_CAP_DB, frechet_distance, frechet_from_stats, mean_ssim, pca_features, psnr, sqrtm_trace, ssim

images = arrays(np.float64, (6, 6), elements=st.floats(0, 1, allow_nan=False))


@settings(max_examples=60)
@given(images, images)
def test_ssim_identity_symmetry_bounds(x, y):
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)
    assert ssim(x, y) == pytest.approx(ssim(y, x), abs=1e-12)
    assert -1 - 1e-12 <= ssim(x, y) <= 1 + 1e-12


def test_ssim_identical_is_exactly_one():
    x = np.random.default_rng(0).uniform(size=(8, 8))
    assert ssim(x, x) == 1.0


@pytest.mark.parametrize("L", [1.0, 255.0])
def test_ssim_constant_images(L):
    c1 = (0.01 * L) ** 2
    assert ssim(np.zeros((4, 4)), np.full((4, 4), L), L) == pytest.approx(c1 / (L * L + c1), rel=1e-12)


def test_ssim_shape_mismatch():
    with pytest.raises(ValueError):
        ssim(np.zeros((2, 2)), np.zeros((2, 3)))


def test_psnr_examples():
    x = np.random.default_rng(1).uniform(size=(8, 8))
    assert psnr(x, x) == PSNR_CAP_DB == 100.0
    assert psnr(np.zeros(4), np.ones(4)) == pytest.approx(0.0, abs=1e-12)
    assert psnr(np.zeros((4, 4)), np.full((4, 4), 0.1)) == pytest.approx(20.0, abs=1e-9)
    assert psnr(x, x + 1e-9) == 100.0
    with pytest.raises(ValueError):
        psnr(np.zeros(3), np.zeros(4))


def test_sqrtm_trace_oracle():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(5, 5))
    b = rng.normal(size=(5, 5))
    A, B = a @ a.T, b @ b.T
    # eigenvalues of AB are real and non-negative; Tr sqrt(AB) is the sum of their roots
    want = np.sum(np.sqrt(np.clip(np.linalg.eigvals(A @ B).real, 0, None)))
    assert sqrtm_trace(A, B) == pytest.approx(want, rel=1e-9)
    with pytest.raises(ValueError):
        sqrtm_trace(-np.eye(2), np.eye(2))


def test_frechet_equal_covariance():
    rng = np.random.default_rng(3)
    m = rng.normal(size=(4, 4))
    cov = m @ m.T
    mu1, mu2 = rng.normal(size=4), rng.normal(size=4)
    assert frechet_from_stats(mu1, cov, mu2, cov) == pytest.approx(np.sum((mu1 - mu2) ** 2), abs=1e-6)


def test_frechet_set_cases():
    rng = np.random.default_rng(4)
    a = rng.uniform(size=(40, 8, 8))
    assert frechet_distance(a, a, 16) <= 1e-8
    b = rng.uniform(size=(40, 8, 8))
    assert frechet_distance(a, b) == pytest.approx(frechet_distance(b, a), rel=1e-6)
    assert frechet_distance(a[rng.permutation(40)], b[rng.permutation(40)]) == pytest.approx(frechet_distance(a, b), rel=1e-9)
    shifted = a + 0.2
    fa, fb = pca_features(a, shifted, 16)
    delta = np.sum((fa.mean(0) - fb.mean(0)) ** 2)
    assert frechet_distance(a, shifted, 16) == pytest.approx(delta, abs=1e-6)
    with pytest.raises(ValueError):
        frechet_distance(a[:16], b, 16)


def test_mean_ssim():
    x = np.random.default_rng(5).uniform(size=(3, 4, 4))
    assert mean_ssim(x, x) == pytest.approx(1.0)
