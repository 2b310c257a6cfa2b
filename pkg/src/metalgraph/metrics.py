"""Image-quality metrics: PSNR, SSIM, HU-windowed variants, normalized gain."""

import numpy as np

from .errors import InvalidArgumentError
from .tensorio import WINDOW_FULL, WINDOW_SOFT

PSNR_CAP_DB = 100.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(a, b, data_range):
    """10*log10(R^2 / MSE), capped at 100 dB for near-zero error."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"shape mismatch {a.shape} vs {b.shape}")
    if data_range <= 0:
        raise InvalidArgumentError("data_range must be positive")
    mse = np.mean((a - b) ** 2)
    r2 = float(data_range) ** 2
    if mse < r2 * 1e-10:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(r2 / mse))


def _gaussian_kernel(size, sigma):
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax * ax) / (2.0 * sigma * sigma))
    k = np.outer(g, g)
    return k / k.sum()


def _window_stats(img, kernel):
    """Valid-mode weighted local means via the separable window."""
    size = kernel.shape[0]
    win = np.lib.stride_tricks.sliding_window_view(img, (size, size))
    return np.tensordot(win, kernel, axes=([2, 3], [0, 1]))


def ssim(a, b, data_range):
    """Mean local SSIM with an 11x11 Gaussian window, sigma 1.5."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"shape mismatch {a.shape} vs {b.shape}")
    if data_range <= 0:
        raise InvalidArgumentError("data_range must be positive")
    if min(a.shape) < SSIM_WINDOW:
        raise InvalidArgumentError(f"image smaller than the {SSIM_WINDOW}px window")
    k = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)
    mu_a = _window_stats(a, k)
    mu_b = _window_stats(b, k)
    var_a = _window_stats(a * a, k) - mu_a * mu_a
    var_b = _window_stats(b * b, k) - mu_b * mu_b
    cov = _window_stats(a * b, k) - mu_a * mu_b
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def _apply_window(img, window):
    lo, hi = window
    return (np.clip(img, lo, hi) - lo) / (hi - lo)


def windowed_metrics(a, b):
    """PSNR/SSIM in the full-range and soft-tissue HU windows plus their mean.

    Each window clamps both HU images, rescales to [0, 1], and evaluates
    with data_range 1.
    """
    out = {}
    for name, window in (("full", WINDOW_FULL), ("soft", WINDOW_SOFT)):
        aw = _apply_window(np.asarray(a, np.float64), window)
        bw = _apply_window(np.asarray(b, np.float64), window)
        out[name] = {"psnr": psnr(aw, bw, 1.0), "ssim": ssim(aw, bw, 1.0)}
    out["mean"] = {
        "psnr": 0.5 * (out["full"]["psnr"] + out["soft"]["psnr"]),
        "ssim": 0.5 * (out["full"]["ssim"] + out["soft"]["ssim"]),
    }
    return out


def normalized_gain(v, v_baseline, v_input, v_ref):
    """Percent gain over baseline, normalized by input-to-reference headroom."""
    if v_ref == v_input:
        raise InvalidArgumentError("reference value must differ from input value")
    return float((v - v_baseline) / (v_ref - v_input) * 100.0)
