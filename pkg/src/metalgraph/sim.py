"""Desk-scale parallel-beam CT simulator with metal corruption.

Generates paired (corrupted X, clean Y, metal mask M) phantoms: random
tissue ellipses plus bright implants, forward-projected, optionally
corrupted inside the metal trace, and reconstructed with filtered
backprojection.  Everything is deterministic per seed.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import InvalidArgumentError
from .geometry import density_from_mask, extract_metal_mask
from .tensorio import clamp_hu, save_tensor

MU_WATER = 0.02          # attenuation per pixel for water-equivalent tissue
DEFAULT_ANGLES = 90
DEFAULT_DETECTORS = 95
DEFAULT_BETA = 0.4
DEFAULT_GAMMA = 0.1


def hu_to_mu(img_hu):
    return np.maximum((np.asarray(img_hu, np.float64) + 1000.0) / 1000.0 * MU_WATER, 0.0)


def mu_to_hu(mu):
    return np.asarray(mu, np.float64) / MU_WATER * 1000.0 - 1000.0


def radon(img, n_angles=DEFAULT_ANGLES, n_det=DEFAULT_DETECTORS, step=0.5):
    """Parallel-beam line integrals; angles uniform in [0, pi)."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise InvalidArgumentError(f"expected a square image, got {img.shape}")
    angles = np.arange(n_angles, dtype=np.float64) * (np.pi / n_angles)
    sino = kernels.radon_fwd(np.ascontiguousarray(img), np.cos(angles),
                             np.sin(angles), n_det, step)
    return sino.astype(np.float32)


def _ramp_filter(n):
    """Fourier response of the discrete ramp (Ram-Lak) kernel."""
    f = np.zeros(n, dtype=np.float64)
    f[0] = 0.25
    odd = np.arange(1, n // 2 + 1, 2)
    f[odd] = -1.0 / (np.pi * odd) ** 2
    f[-odd] = -1.0 / (np.pi * odd) ** 2
    return 2.0 * np.real(np.fft.fft(f))


def fbp(sino, size=None):
    """Ram-Lak filtered backprojection, cropped to the reconstruction circle."""
    sino = np.asarray(sino, dtype=np.float64)
    n_angles, n_det = sino.shape
    if size is None:
        size = int(np.floor(n_det / np.sqrt(2.0)))
    pad = max(64, int(2 ** np.ceil(np.log2(2 * n_det))))
    filt = _ramp_filter(pad)
    proj = np.zeros((n_angles, pad), dtype=np.float64)
    proj[:, :n_det] = sino
    proj = np.real(np.fft.ifft(np.fft.fft(proj, axis=1) * filt[None, :], axis=1))
    proj = np.ascontiguousarray(proj[:, :n_det])
    angles = np.arange(n_angles, dtype=np.float64) * (np.pi / n_angles)
    img = kernels.backproject(proj, np.cos(angles), np.sin(angles), size, size)
    img *= np.pi / (2.0 * n_angles)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy = (size - 1) / 2.0
    r = min(size, size) / 2.0
    img[(yy - cy) ** 2 + (xx - cy) ** 2 > r * r] = 0.0
    return img.astype(np.float32)


def corrupt_metal(sino, metal_sino, beta=DEFAULT_BETA, gamma=DEFAULT_GAMMA):
    """Monotone nonlinear inflation inside the metal trace:
    p' = p * (1 + beta * p_m) + gamma * p_m^2 where p_m > 0."""
    sino = np.asarray(sino, dtype=np.float64)
    pm = np.asarray(metal_sino, dtype=np.float64)
    if sino.shape != pm.shape:
        raise InvalidArgumentError("sinogram geometries must match")
    out = sino.copy()
    trace = pm > 0
    out[trace] = sino[trace] * (1.0 + beta * pm[trace]) + gamma * pm[trace] ** 2
    return out.astype(np.float32)


@dataclass
class Phantom:
    hu: np.ndarray                       # (size, size) float32 HU
    implant_mask: np.ndarray             # uint8
    n_implants: int
    ellipses: list = field(default_factory=list)


def disk_phantom(size, radius, value=0.04, center=None, supersample=8):
    """Uniform disk with partial-volume (area-weighted) edge pixels."""
    if center is None:
        center = ((size - 1) / 2.0, (size - 1) / 2.0)
    ss = supersample
    yy, xx = np.mgrid[0 : size * ss, 0 : size * ss].astype(np.float64)
    cy = center[0] * ss + (ss - 1) / 2.0
    cx = center[1] * ss + (ss - 1) / 2.0
    d = ((yy - cy) ** 2 + (xx - cx) ** 2 <= (radius * ss) ** 2).astype(np.float64)
    return d.reshape(size, ss, size, ss).mean(axis=(1, 3)) * value


def _ellipse_mask(size, cy, cx, ay, ax, angle):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    ca, sa = np.cos(angle), np.sin(angle)
    u = (yy - cy) * ca + (xx - cx) * sa
    v = -(yy - cy) * sa + (xx - cx) * ca
    return (u / ay) ** 2 + (v / ax) ** 2 <= 1.0


def random_phantom(rng, size=64, n_implants=2):
    """Water-equivalent body ellipse, a few tissue ellipses, bright implants."""
    img = np.full((size, size), -1000.0)
    c = (size - 1) / 2.0
    body_ay = size * rng.uniform(0.34, 0.42)
    body_ax = size * rng.uniform(0.34, 0.42)
    body = _ellipse_mask(size, c + rng.uniform(-2, 2), c + rng.uniform(-2, 2),
                         body_ay, body_ax, rng.uniform(0, np.pi))
    img[body] = rng.uniform(0.0, 60.0)
    ellipses = []
    for _ in range(rng.integers(2, 5)):
        ay = size * rng.uniform(0.05, 0.16)
        ax = size * rng.uniform(0.05, 0.16)
        cy = c + rng.uniform(-0.22, 0.22) * size
        cx = c + rng.uniform(-0.22, 0.22) * size
        hu = rng.uniform(-250.0, 350.0)
        e = _ellipse_mask(size, cy, cx, ay, ax, rng.uniform(0, np.pi)) & body
        img[e] = hu
        ellipses.append((cy, cx, ay, ax, hu))

    implant_mask = np.zeros((size, size), dtype=np.uint8)
    centers = []
    tries = 0
    while len(centers) < n_implants and tries < 200:
        tries += 1
        cy = c + rng.uniform(-0.26, 0.26) * size
        cx = c + rng.uniform(-0.26, 0.26) * size
        if any(np.hypot(cy - py, cx - px) < size * 0.22 for py, px in centers):
            continue
        centers.append((cy, cx))
        r = rng.uniform(1.6, 3.2)
        disk = _ellipse_mask(size, cy, cx, r, r, 0.0)
        implant_mask[disk] = 1
        img[disk] = rng.uniform(3800.0, 4096.0)
    return Phantom(hu=clamp_hu(img), implant_mask=implant_mask,
                   n_implants=len(centers), ellipses=ellipses)


def simulate_pair(phantom, n_angles=DEFAULT_ANGLES, n_det=DEFAULT_DETECTORS,
                  beta=DEFAULT_BETA, gamma=DEFAULT_GAMMA):
    """Forward-project, corrupt inside the metal trace, reconstruct both."""
    size = phantom.hu.shape[0]
    mu = hu_to_mu(phantom.hu)
    sino = radon(mu, n_angles, n_det)
    metal_sino = radon(phantom.implant_mask.astype(np.float64), n_angles, n_det)
    clean = clamp_hu(mu_to_hu(fbp(sino, size)))
    corrupted = clamp_hu(mu_to_hu(fbp(corrupt_metal(sino, metal_sino, beta, gamma), size)))
    mask = extract_metal_mask(clean)
    return corrupted, clean, mask


def analytic_pair(phantom, rng):
    """Ultra-fast fallback: synthetic streaks painted along the
    density-graph lines instead of a physical projection round trip."""
    clean = phantom.hu.copy()
    mask = phantom.implant_mask
    density, n, _ = density_from_mask(mask)
    size = clean.shape[0]
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    ripple = np.zeros((size, size))
    for _ in range(3):
        phase = rng.uniform(0, 2 * np.pi)
        freq = rng.uniform(0.4, 1.2)
        ang = rng.uniform(0, np.pi)
        ripple += np.cos(freq * (yy * np.cos(ang) + xx * np.sin(ang)) + phase)
    amp = rng.uniform(150.0, 300.0)
    corrupted = clean + amp * density * ripple
    corrupted += rng.normal(0.0, 8.0, clean.shape)
    return clamp_hu(corrupted), clean, mask


def make_dataset(out_dir, n_train, n_test, seed, implants=(2, 3), size=64,
                 n_angles=DEFAULT_ANGLES, n_det=DEFAULT_DETECTORS,
                 beta=DEFAULT_BETA, gamma=DEFAULT_GAMMA, fast=False):
    """Write a deterministic corpus of (x, y, m) triples plus manifest.json.

    Layout: <out>/manifest.json, <out>/{train,test}/{x,y,m}_%05d.bt
    """
    out = Path(out_dir)
    lo, hi = int(implants[0]), int(implants[1])
    if not (1 <= lo <= hi <= 4):
        raise InvalidArgumentError(f"implant range must be within 1..4, got {implants}")
    manifest = {
        "seed": int(seed), "size": int(size), "implants": [lo, hi],
        "n_angles": int(n_angles), "n_det": int(n_det),
        "beta": float(beta), "gamma": float(gamma),
        "mode": "fast" if fast else "fbp",
        "splits": {"train": int(n_train), "test": int(n_test)},
        "samples": {"train": [], "test": []},
    }
    index = 0
    for split, count in (("train", n_train), ("test", n_test)):
        d = out / split
        d.mkdir(parents=True, exist_ok=True)
        for i in range(count):
            rng = np.random.Generator(np.random.PCG64(
                np.random.SeedSequence([int(seed) & 0xFFFFFFFF, index])))
            n_imp = int(rng.integers(lo, hi + 1))
            phantom = random_phantom(rng, size=size, n_implants=n_imp)
            if fast:
                x, y, m = analytic_pair(phantom, rng)
            else:
                x, y, m = simulate_pair(phantom, n_angles, n_det, beta, gamma)
            save_tensor(d / f"x_{i:05d}.bt", x)
            save_tensor(d / f"y_{i:05d}.bt", y)
            save_tensor(d / f"m_{i:05d}.bt", m.astype(np.float32))
            manifest["samples"][split].append({
                "index": i,
                "implants_requested": n_imp,
                "metal_pixels": int(m.sum()),
            })
            index += 1
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    return manifest
