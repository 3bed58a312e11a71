"""Full-reference image quality metrics."""

import numpy as np
import torch
from scipy.ndimage import gaussian_filter

from .errors import ShapeMismatchError

PSNR_CAP = 100.0
_SSIM_WIN = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def _as_numpy(x) -> np.ndarray:
    if isinstance(x, torch.Tensor):
        x = x.detach().cpu().numpy()
    return np.asarray(x, dtype=np.float64)


def psnr(x, xhat) -> float:
    """10*log10(1/MSE) for [0,1] images, capped at 100 dB."""
    a, b = _as_numpy(x), _as_numpy(xhat)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse < 1e-10:
        return PSNR_CAP
    return min(PSNR_CAP, float(10.0 * np.log10(1.0 / mse)))


def _ssim_plane(a: np.ndarray, b: np.ndarray) -> float:
    c1 = _SSIM_K1 ** 2
    c2 = _SSIM_K2 ** 2
    blur = lambda im: gaussian_filter(im, _SSIM_SIGMA, truncate=3.5, mode="reflect")
    mu_a = blur(a)
    mu_b = blur(b)
    var_a = blur(a * a) - mu_a * mu_a
    var_b = blur(b * b) - mu_b * mu_b
    cov = blur(a * b) - mu_a * mu_b
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    )
    pad = (_SSIM_WIN - 1) // 2
    return float(s[pad:-pad, pad:-pad].mean())


def structural_similarity(x, xhat) -> float:
    """Windowed structural-similarity index, mean over windows and channels.

    Gaussian 11x11 window (sigma 1.5), standard stabilizing constants, unit
    data range.
    """
    a, b = _as_numpy(x), _as_numpy(xhat)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[None]
        b = b[None]
    if min(a.shape[-2:]) < _SSIM_WIN:
        raise ShapeMismatchError(
            f"image {a.shape[-2:]} smaller than the {_SSIM_WIN}x{_SSIM_WIN} window"
        )
    return float(np.mean([_ssim_plane(a[c], b[c]) for c in range(a.shape[0])]))


def distortion_mse(x: torch.Tensor, xhat: torch.Tensor) -> torch.Tensor:
    """Mean squared error in 8-bit pixel units (scaled by 255^2), differentiable."""
    if x.shape != xhat.shape:
        raise ShapeMismatchError(f"shapes differ: {tuple(x.shape)} vs {tuple(xhat.shape)}")
    return ((x - xhat) ** 2).mean() * (255.0 ** 2)
