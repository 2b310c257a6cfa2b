"""Brute-force reference implementations and gradient-check harness.

These are deliberately naive (nested scalar loops, dense matrices,
exhaustive scans) and independent of the production code paths they
verify.  Used by the test suite and the ``selftest`` CLI command.
"""

import numpy as np

from .autodiff import DiffTensor


def oracle_resize_nearest(src, target):
    h, w = target
    sh, sw = src.shape
    out = np.empty((h, w), dtype=src.dtype)
    for i in range(h):
        for j in range(w):
            out[i, j] = src[(i * sh) // h, (j * sw) // w]
    return out


def oracle_resize_bilinear(src, target):
    h, w = target
    sh, sw = src.shape
    out = np.empty((h, w), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            sy = (i + 0.5) * sh / h - 0.5
            sx = (j + 0.5) * sw / w - 0.5
            y0 = int(np.floor(sy))
            x0 = int(np.floor(sx))
            fy = sy - y0
            fx = sx - x0
            y0c = min(max(y0, 0), sh - 1)
            y1c = min(max(y0 + 1, 0), sh - 1)
            x0c = min(max(x0, 0), sw - 1)
            x1c = min(max(x0 + 1, 0), sw - 1)
            out[i, j] = ((1 - fy) * (1 - fx) * src[y0c, x0c]
                         + (1 - fy) * fx * src[y0c, x1c]
                         + fy * (1 - fx) * src[y1c, x0c]
                         + fy * fx * src[y1c, x1c])
    return out


def oracle_components_bfs(mask):
    """8-connectivity flood fill; components keyed by first row-major pixel."""
    h, w = mask.shape
    seen = np.zeros((h, w), dtype=bool)
    comps = []
    for r in range(h):
        for c in range(w):
            if not mask[r, c] or seen[r, c]:
                continue
            queue = [(r, c)]
            seen[r, c] = True
            px = []
            while queue:
                pr, pc = queue.pop(0)
                px.append((pr, pc))
                for dr in (-1, 0, 1):
                    for dc in (-1, 0, 1):
                        nr, nc = pr + dr, pc + dc
                        if (0 <= nr < h and 0 <= nc < w
                                and mask[nr, nc] and not seen[nr, nc]):
                            seen[nr, nc] = True
                            queue.append((nr, nc))
            comps.append(sorted(px))
    return comps


def oracle_boundary_erosion(mask):
    """Mask minus its 4-neighbourhood erosion (border treated as open)."""
    h, w = mask.shape
    er = np.zeros((h, w), dtype=bool)
    for r in range(h):
        for c in range(w):
            if not mask[r, c]:
                continue
            if r == 0 or r == h - 1 or c == 0 or c == w - 1:
                continue
            er[r, c] = (mask[r - 1, c] and mask[r + 1, c]
                        and mask[r, c - 1] and mask[r, c + 1])
    return mask.astype(bool) & ~er


def oracle_nearest_metal(metal_rc, h, w):
    """Exhaustive O(n*m) nearest scan, ties by smallest row-major index."""
    dr = np.zeros((h, w), dtype=np.int64)
    dc = np.zeros((h, w), dtype=np.int64)
    for r in range(h):
        for c in range(w):
            best = None
            for (mr, mc) in metal_rc:
                d2 = (r - mr) ** 2 + (c - mc) ** 2
                if best is None or d2 < best[0]:
                    best = (d2, r - mr, c - mc)
            dr[r, c] = best[1]
            dc[r, c] = best[2]
    return dr, dc


def oracle_dense_adjacency(theta, rad, k_ang, k_rad, sigma,
                           density=None, n_implants=1):
    """Dense O(n^2) construction of the normalized artifact graph."""
    n = len(theta)
    k_ang = min(k_ang, n - 1)
    k_rad = min(k_rad, n - 1)
    a = np.zeros((n, n), dtype=np.float64)
    inv = 1.0 / (2.0 * sigma * sigma)
    for i in range(n):
        wa, wr = [], []
        for j in range(n):
            if j == i:
                continue
            d = abs(theta[i] - theta[j])
            d = min(d, 2.0 * np.pi - d)
            wa.append((-np.exp(-(d * d) * inv), j))
            d = rad[i] - rad[j]
            wr.append((-np.exp(-(d * d) * inv), j))
        for (negw, j) in sorted(wa)[:k_ang]:
            a[i, j] += -negw
        for (negw, j) in sorted(wr)[:k_rad]:
            a[i, j] += -negw
    if density is not None and n_implants >= 2:
        g = np.asarray(density, dtype=np.float64).reshape(-1)
        for i in range(n):
            for j in range(n):
                if a[i, j] != 0:
                    a[i, j] *= np.sqrt(g[i] * g[j])
    a = a + a.T
    deg = a.sum(axis=1)
    safe = np.where(deg > 0, deg, 1.0)
    return a / np.sqrt(np.outer(safe, safe))


def oracle_conv2d(x, w, b, stride=1):
    """Direct six-loop same-padded cross-correlation."""
    bsz, ci, h, ww = x.shape
    co, _, kh, kw = w.shape
    pad = kh // 2
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (ww + 2 * pad - kw) // stride + 1
    out = np.zeros((bsz, co, ho, wo), dtype=np.float64)
    for bi in range(bsz):
        for o in range(co):
            for oy in range(ho):
                for ox in range(wo):
                    acc = float(b[o])
                    for c in range(ci):
                        for ky in range(kh):
                            for kx in range(kw):
                                iy = oy * stride + ky - pad
                                ix = ox * stride + kx - pad
                                if 0 <= iy < h and 0 <= ix < ww:
                                    acc += float(w[o, c, ky, kx]) * float(x[bi, c, iy, ix])
                    out[bi, o, oy, ox] = acc
    return out


def oracle_route_fuse(w_map, experts):
    """Scalar-loop convex fusion of expert maps."""
    bsz, k, h, ww = w_map.shape
    c = experts[0].shape[1]
    out = np.zeros((bsz, c, h, ww), dtype=np.float64)
    for bi in range(bsz):
        for ch in range(c):
            for y in range(h):
                for x in range(ww):
                    s = 0.0
                    for e in range(k):
                        s += float(w_map[bi, e, y, x]) * float(experts[e][bi, ch, y, x])
                    out[bi, ch, y, x] = s
    return out


def oracle_ssim(a, b, data_range, window=11, sigma=1.5, k1=0.01, k2=0.03):
    """Direct windowed-statistics SSIM (valid windows, Gaussian weights)."""
    ax = np.arange(window) - (window - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2 * sigma ** 2))
    kern = np.outer(g, g)
    kern /= kern.sum()
    h, w = a.shape
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    vals = []
    for i in range(h - window + 1):
        for j in range(w - window + 1):
            pa = a[i : i + window, j : j + window]
            pb = b[i : i + window, j : j + window]
            mu_a = (pa * kern).sum()
            mu_b = (pb * kern).sum()
            va = (pa * pa * kern).sum() - mu_a ** 2
            vb = (pb * pb * kern).sum() - mu_b ** 2
            cov = (pa * pb * kern).sum() - mu_a * mu_b
            vals.append(((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                        / ((mu_a ** 2 + mu_b ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def oracle_bresenham_pixels(r0, c0, r1, c1):
    """Expected pixel count and 8-connectivity check helpers for a segment."""
    return max(abs(r1 - r0), abs(c1 - c0)) + 1


def to_float64(params):
    for p in params:
        p.value = p.value.astype(np.float64)


def gradcheck(forward_fn, leaves, eps=1e-3, rtol=1e-3, atol=1e-8):
    """Central finite differences against reverse-mode gradients.

    ``forward_fn()`` must rebuild the graph from the leaves' current
    ``.value`` buffers and return a scalar DiffTensor.  Leaves should be
    float64.  The comparison is over the concatenated gradient of all
    leaves, so directions with structurally zero gradients (e.g. a conv
    bias swallowed by batch-norm mean subtraction) do not divide noise
    by zero.  Returns the measured relative L2 error.
    """
    for leaf in leaves:
        leaf.grad = None
    loss = forward_fn()
    loss.backward()
    ad_parts, fd_parts = [], []
    for leaf in leaves:
        g_ad = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)
        g_fd = np.zeros_like(leaf.value, dtype=np.float64)
        flat = leaf.value.reshape(-1)
        gf = g_fd.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(forward_fn().value)
            flat[i] = orig - eps
            fm = float(forward_fn().value)
            flat[i] = orig
            gf[i] = (fp - fm) / (2 * eps)
        ad_parts.append(np.asarray(g_ad, np.float64).ravel())
        fd_parts.append(g_fd.ravel())
    g_ad = np.concatenate(ad_parts)
    g_fd = np.concatenate(fd_parts)
    diff = np.linalg.norm(g_ad - g_fd)
    denom = max(np.linalg.norm(g_ad), np.linalg.norm(g_fd))
    rel = diff / denom if denom > 0 else 0.0
    if diff > rtol * denom + atol:
        raise AssertionError(f"gradient check failed: rel err {rel:.3e} > {rtol:g}")
    return rel


def leaf(a):
    """Float64 differentiable leaf for gradient checks."""
    return DiffTensor(np.asarray(a, dtype=np.float64).copy())
