"""Built-in oracle suites behind the ``selftest`` CLI command."""

import time

import numpy as np

from . import autodiff as ad
from . import oracles as orc
from .geometry import boundary_pixels, connected_components, density_from_mask
from .losses import FusionParams, clinical_fuse
from .metrics import normalized_gain, psnr, ssim
from .moe import GraphMoE, GraphMoeConfig, make_context
from .polar import DEFAULT_SIGMA, angular_weight, build_artifact_graph, compute_polar
from .resample import resize_bilinear, resize_nearest


def _random_mask(rng, h, w, p=0.08):
    m = (rng.random((h, w)) < p).astype(np.uint8)
    if not m.any():
        m[rng.integers(h), rng.integers(w)] = 1
    return m


def _suite_resampling(rng, n=8):
    for _ in range(n):
        h, w = rng.integers(3, 17, 2)
        th, tw = rng.integers(1, 13, 2)
        src = rng.random((h, w)).astype(np.float32)
        if not np.array_equal(resize_nearest(src, (th, tw)),
                              orc.oracle_resize_nearest(src, (th, tw))):
            return "nearest-resize mismatch"
        got = resize_bilinear(src, (th, tw))
        if np.abs(got - orc.oracle_resize_bilinear(src, (th, tw))).max() > 1e-5:
            return "bilinear-resize mismatch"
    return None


def _suite_graph(rng, n=10):
    for _ in range(n):
        h, w = rng.integers(6, 20, 2)
        mask = _random_mask(rng, h, w)
        implants = connected_components(mask)
        ref = orc.oracle_components_bfs(mask)
        got = [sorted(map(tuple, c)) for c in implants.components]
        if got != ref:
            return "connected components mismatch"
        bset = boundary_pixels(implants)
        bmask = np.zeros((h, w), dtype=bool)
        for b in bset.boundaries:
            if len(b):
                bmask[b[:, 0], b[:, 1]] = True
        if not np.array_equal(bmask, orc.oracle_boundary_erosion(mask)):
            return "boundary extraction mismatch"
        density, _, _ = density_from_mask(mask)
        if density.min() < 0 or density.max() > 1:
            return "density out of range"
    return None


def _suite_polar_adjacency(rng, angular_sigma, n=6):
    # direct angular-weight formula check against the reference Gaussian
    for _ in range(40):
        t1, t2 = rng.uniform(-np.pi, np.pi, 2)
        d = abs(t1 - t2)
        d = min(d, 2 * np.pi - d)
        expect = np.exp(-(d * d) / (2 * DEFAULT_SIGMA ** 2))
        if abs(angular_weight(t1, t2, sigma=angular_sigma) - expect) > 1e-9:
            return "angular weight formula mismatch"
    for _ in range(n):
        h, w = rng.integers(4, 9, 2)
        mask = _random_mask(rng, h, w, 0.12)
        polar = compute_polar(mask)
        dr, dc = orc.oracle_nearest_metal(np.argwhere(mask > 0), h, w)
        if np.abs(np.hypot(dr, dc) - polar.radius).max() > 1e-4:
            return "nearest-metal radius mismatch"
        density = rng.random((h, w)).astype(np.float32)
        adj = build_artifact_graph(polar, density, 2, k_ang=5, k_rad=2)
        dense = orc.oracle_dense_adjacency(
            polar.theta.reshape(-1).astype(np.float64),
            polar.radius.reshape(-1).astype(np.float64),
            5, 2, DEFAULT_SIGMA, density=density, n_implants=2)
        if np.abs(adj.to_dense() - dense).max() > 1e-5:
            return "adjacency mismatch vs dense oracle"
    return None


def _suite_gradients(rng, seeds=3):
    for s in range(seeds):
        r = np.random.default_rng(100 + s)
        x = orc.leaf(r.standard_normal((2, 3, 5, 6)))
        w = orc.leaf(r.standard_normal((4, 3, 3, 3)) * 0.3)
        b = orc.leaf(r.standard_normal(4) * 0.1)
        pc = r.standard_normal((2, 4, 5, 6))
        orc.gradcheck(lambda: ad.reduce_mean(
            ad.mul(ad.conv2d(x, w, b), ad.constant(pc))), [x, w, b])
        y = orc.leaf(r.standard_normal((2, 4, 3, 3)))
        ps = r.standard_normal(y.value.shape)
        orc.gradcheck(lambda: ad.reduce_mean(ad.mul(
            ad.softmax_channels(y), ad.constant(ps))), [y])
        z = orc.leaf(r.standard_normal((3, 7)) * 2)
        pm = r.standard_normal(z.value.shape)
        orc.gradcheck(lambda: ad.reduce_mean(ad.mul(
            ad.minmax_norm(z), ad.constant(pm))), [z])
    return None


def _suite_moe_composition(rng):
    mask = np.zeros((8, 8), np.uint8)
    mask[1, 1] = 1
    mask[6, 5] = 1
    density = rng.random((8, 8)).astype(np.float32)
    cfg = GraphMoeConfig(experts=2, k_ang=4, k_rad=2)
    ctx = make_context(mask, density, 2, (8, 8), cfg)
    moe = GraphMoE(2, cfg, seed=11, name="selftest_moe")
    params = moe.params()
    orc.to_float64(params)
    for p in params:
        if p.name.endswith(".bn.beta"):
            p.value = p.value + 0.7
    proj = np.random.default_rng(5).standard_normal((2, 2, 8, 8))
    x = orc.leaf(np.random.default_rng(6).standard_normal((2, 2, 8, 8)) * 0.5)

    def forward():
        out, _, _ = moe(x, [ctx, ctx], train=True)
        return ad.reduce_mean(ad.mul(out, ad.constant(proj)))

    orc.gradcheck(forward, [x] + params[:6], eps=1e-5)
    return None


def _suite_metrics(rng):
    a = rng.random((24, 24))
    b = a + rng.normal(0, 0.1, a.shape)
    if abs(ssim(a, b, 1.0) - orc.oracle_ssim(a, b, 1.0)) > 1e-4:
        return "ssim oracle mismatch"
    if psnr(a, a, 1.0) != 100.0:
        return "psnr cap violated"
    if abs(normalized_gain(43.89, 40.54, 33.71, 50.0) - 20.6) > 0.05:
        return "normalized gain reference value off"
    if abs(normalized_gain(39.44, 37.35, 26.94, 50.0) - 9.1) > 0.05:
        return "normalized gain reference value off"
    x = rng.random((12, 12)).astype(np.float32)
    y = rng.random((12, 12)).astype(np.float32)
    att = rng.random((12, 12)).astype(np.float32)
    if not np.array_equal(clinical_fuse(x, y, att, FusionParams(0.3, 1.0)), y):
        return "fusion tau=1 identity violated"
    if not np.array_equal(clinical_fuse(x, y, np.ones_like(att), FusionParams(0.5, 0.2)), y):
        return "fusion full-mask identity violated"
    if not np.array_equal(clinical_fuse(x, y, np.zeros_like(att), FusionParams(0.5, 0.0)), x):
        return "fusion tau=0 empty-mask identity violated"
    return None


def run_selftest(angular_sigma=DEFAULT_SIGMA, quick=False, out=print):
    """Run every suite; returns True when all pass."""
    rng = np.random.default_rng(2024)
    suites = [
        ("resampling-oracles", lambda: _suite_resampling(rng, 4 if quick else 8)),
        ("graph-oracles", lambda: _suite_graph(rng, 5 if quick else 10)),
        ("polar-adjacency", lambda: _suite_polar_adjacency(
            rng, angular_sigma, 3 if quick else 6)),
        ("gradient-checks", lambda: _suite_gradients(rng, 1 if quick else 3)),
        ("moe-composition", lambda: _suite_moe_composition(rng)),
        ("metric-oracles", lambda: _suite_metrics(rng)),
    ]
    all_ok = True
    out(f"{'suite':<22} {'status':<6} time")
    for name, fn in suites:
        t0 = time.time()
        try:
            detail = fn()
        except AssertionError as e:
            detail = str(e)
        ok = detail is None
        all_ok &= ok
        out(f"{name:<22} {'pass' if ok else 'FAIL':<6} {time.time() - t0:5.1f}s"
            + ("" if ok else f"  {detail}"))
    return all_ok
