"""Reference image quality metrics: PSNR and SSIM with an RGB / Y-channel mode.

PSNR uses peak value 1 and caps identical images at 100 dB so reports stay
finite. SSIM uses the canonical 11x11 Gaussian window, sigma 1.5, K1 = 0.01,
K2 = 0.03, dynamic range 1, averaged over the valid interior.
"""

from __future__ import annotations

import numpy as np
from scipy import signal

from allweather.errors import ShapeError
from allweather.images import luma

PSNR_CAP_DB = 100.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def _as_mode(a: np.ndarray, b: np.ndarray, mode: str) -> tuple[np.ndarray, np.ndarray]:
    if mode == "rgb":
        return a, b
    if mode == "y":
        if a.ndim != 3 or a.shape[2] != 3:
            raise ShapeError("y-channel mode requires [H, W, 3] inputs")
        return luma(a), luma(b)
    raise ValueError(f"unknown metric mode {mode!r}, expected 'rgb' or 'y'")


def psnr(a: np.ndarray, b: np.ndarray, mode: str = "rgb") -> float:
    """Peak signal-to-noise ratio in dB for [0,1]-range images."""
    a, b = _check_pair(a, b)
    a, b = _as_mode(a, b, mode)
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return PSNR_CAP_DB
    return float(min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def _ssim_single(a: np.ndarray, b: np.ndarray) -> float:
    h, w = a.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ShapeError(f"image {h}x{w} smaller than SSIM window {SSIM_WINDOW}")
    win = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2

    mu_a = signal.convolve2d(a, win, mode="valid")
    mu_b = signal.convolve2d(b, win, mode="valid")
    mu_aa = mu_a * mu_a
    mu_bb = mu_b * mu_b
    mu_ab = mu_a * mu_b
    var_a = signal.convolve2d(a * a, win, mode="valid") - mu_aa
    var_b = signal.convolve2d(b * b, win, mode="valid") - mu_bb
    cov = signal.convolve2d(a * b, win, mode="valid") - mu_ab

    num = (2.0 * mu_ab + c1) * (2.0 * cov + c2)
    den = (mu_aa + mu_bb + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim(a: np.ndarray, b: np.ndarray, mode: str = "rgb") -> float:
    """Mean local structural similarity, in [-1, 1]."""
    a, b = _check_pair(a, b)
    a, b = _as_mode(a, b, mode)
    if a.ndim == 2:
        return _ssim_single(a, b)
    if a.ndim == 3:
        return float(np.mean([_ssim_single(a[..., c], b[..., c]) for c in range(a.shape[2])]))
    raise ShapeError(f"ssim expects 2-D or 3-D arrays, got {a.ndim}-D")
