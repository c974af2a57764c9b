"""Image quality metrics: global SSIM, PSNR and a PCA-feature Frechet
distance (reported as ``fid_proxy``; it is not Inception FID)."""

from __future__ import annotations

import numpy as np

PSNR_CAP_DB = 100.0


def _pair(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    return x, y


def ssim(x, y, data_range: float = 1.0) -> float:
    """SSIM from whole-image statistics (no sliding window)."""
    x, y = _pair(x, y)
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    mx, my = x.mean(), y.mean()
    vx, vy = x.var(), y.var()
    cov = np.mean((x - mx) * (y - my))
    lum = (2 * mx * my + c1) / (mx * mx + my * my + c1)
    struct = (2 * cov + c2) / (vx + vy + c2)
    return float(lum * struct)


def psnr(x, y, max_value: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, capped at 100 dB (identical images)."""
    x, y = _pair(x, y)
    mse = np.mean((x - y) ** 2)
    if mse == 0:
        return PSNR_CAP_DB
    return float(min(PSNR_CAP_DB, 10 * np.log10(max_value**2 / mse)))


def sqrtm_trace(a: np.ndarray, b: np.ndarray, tol: float = 1e-8) -> float:
    """``Tr sqrt(A B)`` for symmetric PSD A, B via the symmetric form
    ``sqrt(A) B sqrt(A)``, which shares the eigenvalues of ``A B``."""
    wa, va = np.linalg.eigh((a + a.T) / 2)
    wa = _clamp(wa, tol)
    ra = (va * np.sqrt(wa)) @ va.T
    m = ra @ b @ ra
    w = _clamp(np.linalg.eigvalsh((m + m.T) / 2), tol)
    return float(np.sum(np.sqrt(w)))


def _clamp(w, tol):
    floor = -tol * max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
    if np.any(w < floor):
        raise ValueError(f"matrix is not positive semi-definite (eigenvalue {w.min():.3e})")
    return np.maximum(w, 0.0)


def frechet_from_stats(mu_a, cov_a, mu_b, cov_b) -> float:
    """Squared Frechet (W2) distance between two Gaussians."""
    mu_a, mu_b = np.atleast_1d(mu_a), np.atleast_1d(mu_b)
    cov_a, cov_b = np.atleast_2d(cov_a), np.atleast_2d(cov_b)
    d = float(np.sum((mu_a - mu_b) ** 2))
    t = float(np.trace(cov_a) + np.trace(cov_b)) - 2 * sqrtm_trace(cov_a, cov_b)
    return max(d + t, 0.0)


def pca_features(set_a, set_b, feature_dim: int):
    """Project both sets onto the top principal components of their union."""
    a = np.asarray(set_a, dtype=float).reshape(len(set_a), -1)
    b = np.asarray(set_b, dtype=float).reshape(len(set_b), -1)
    both = np.concatenate([a, b])
    center = both.mean(axis=0)
    _, _, vt = np.linalg.svd(both - center, full_matrices=False)
    basis = vt[:feature_dim].T
    return (a - center) @ basis, (b - center) @ basis


def frechet_distance(set_a, set_b, feature_dim: int = 16) -> float:
    """Squared Frechet distance between Gaussian fits of PCA features."""
    if min(len(set_a), len(set_b)) < feature_dim + 1:
        raise ValueError(f"each set needs at least {feature_dim + 1} images")
    fa, fb = pca_features(set_a, set_b, feature_dim)
    return frechet_from_stats(fa.mean(0), np.cov(fa, rowvar=False), fb.mean(0), np.cov(fb, rowvar=False))


def mean_ssim(samples, references, data_range: float = 1.0) -> float:
    return float(np.mean([ssim(s, r, data_range) for s, r in zip(samples, references)]))
