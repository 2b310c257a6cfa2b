"""Pure-numpy fallback implementations of the hot kernels.

Every function here has a numba twin in ``_numba_impl`` with the same
signature and (up to float rounding) the same output.  Integer-valued
kernels (line rasterization, nearest-metal search, top-k selection
structure) agree bit-exactly: both backends use the same tie-break rules.
"""

import numpy as np

BACKEND_NAME = "numpy"


def accumulate_lines(segments, h, w):
    """Rasterize integer segments (r0,c0,r1,c1) with Bresenham, +1 per pixel.

    Endpoints are always included; raster(p,q) covers the same pixel set
    as raster(q,p).  Returns an int64 (h, w) accumulator.
    """
    acc = np.zeros((h, w), dtype=np.int64)
    for r0, c0, r1, c1 in np.asarray(segments, dtype=np.int64).reshape(-1, 4):
        # canonical endpoint order makes raster(p,q) == raster(q,p) as sets
        if (r1, c1) < (r0, c0):
            r0, c0, r1, c1 = r1, c1, r0, c0
        dr = abs(r1 - r0)
        dc = abs(c1 - c0)
        sr = 1 if r0 < r1 else -1
        sc = 1 if c0 < c1 else -1
        err = dc - dr
        r, c = r0, c0
        while True:
            acc[r, c] += 1
            if r == r1 and c == c1:
                break
            e2 = 2 * err
            if e2 >= -dr:
                err -= dr
                c += sc
            if e2 <= dc:
                err += dc
                r += sr
    return acc


def nearest_offsets(metal_rc, h, w):
    """Per-pixel offset to the nearest metal pixel (Euclidean).

    ``metal_rc`` is an (m, 2) int64 array of (row, col) positions sorted
    in row-major order; ties go to the smallest row-major index.  Returns
    (dr, dc) int32 maps with value = node - nearest_metal.
    """
    metal_rc = np.asarray(metal_rc, dtype=np.int64).reshape(-1, 2)
    rows = np.arange(h, dtype=np.int64)[:, None, None]
    cols = np.arange(w, dtype=np.int64)[None, :, None]
    d2 = (rows - metal_rc[:, 0]) ** 2 + (cols - metal_rc[:, 1]) ** 2
    best = np.argmin(d2, axis=2)  # first occurrence wins -> smallest index
    dr = rows[:, :, 0] - metal_rc[best, 0]
    dc = cols[:, :, 0] - metal_rc[best, 1]
    return dr.astype(np.int32), dc.astype(np.int32)


def topk_edges(theta, rad, k_ang, k_rad, sigma):
    """Directed polar-similarity edges: per node, the k_ang best angular
    and k_rad best radial neighbours (self excluded, ties by smallest
    node index).  Returns (src, dst, weight) with duplicates kept when a
    pair is selected by both edge types.
    """
    theta = np.asarray(theta, dtype=np.float64)
    rad = np.asarray(rad, dtype=np.float64)
    n = theta.shape[0]
    inv = 1.0 / (2.0 * sigma * sigma)
    src_list, dst_list, w_list = [], [], []
    idx = np.arange(n)
    for i in range(n):
        if k_ang > 0:
            d = np.abs(theta - theta[i])
            d = np.minimum(d, 2.0 * np.pi - d)
            w = np.exp(-(d * d) * inv)
            w[i] = -np.inf
            order = np.argsort(-w, kind="stable")[:k_ang]
            src_list.append(np.full(k_ang, i))
            dst_list.append(order)
            w_list.append(w[order])
        if k_rad > 0:
            d = rad - rad[i]
            w = np.exp(-(d * d) * inv)
            w[i] = -np.inf
            order = np.argsort(-w, kind="stable")[:k_rad]
            src_list.append(np.full(k_rad, i))
            dst_list.append(order)
            w_list.append(w[order])
    if not src_list:
        e = np.empty(0, dtype=np.int64)
        return e, e.copy(), np.empty(0, dtype=np.float64)
    return (
        np.concatenate(src_list).astype(np.int64),
        np.concatenate(dst_list).astype(np.int64),
        np.concatenate(w_list),
    )


def conv2d_fwd(xp, w, b, stride, ho, wo):
    """Cross-correlation on a pre-padded input xp (B, Ci, Hp, Wp)."""
    kh, kw = w.shape[2], w.shape[3]
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride][:, :, :ho, :wo]
    out = np.einsum("bchwyx,ocyx->bohw", win, w, optimize=True)
    return (out + b[None, :, None, None]).astype(xp.dtype, copy=False)


def conv2d_bwd_w(xp, gy, kh, kw, stride):
    """Weight gradient for conv2d_fwd; returns (gw, gb)."""
    ho, wo = gy.shape[2], gy.shape[3]
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride][:, :, :ho, :wo]
    gw = np.einsum("bchwyx,bohw->ocyx", win, gy, optimize=True)
    gb = gy.sum(axis=(0, 2, 3))
    return gw.astype(xp.dtype, copy=False), gb.astype(xp.dtype, copy=False)


def conv2d_bwd_x(gy, w, stride, hp, wp):
    """Input gradient (padded size) for conv2d_fwd."""
    bsz, co, ho, wo = gy.shape
    ci, kh, kw = w.shape[1], w.shape[2], w.shape[3]
    gxp = np.zeros((bsz, ci, hp, wp), dtype=gy.dtype)
    # scatter each kernel tap: gxp[:, ci, oy*s+ky, ox*s+kx] += w * gy
    for ky in range(kh):
        for kx in range(kw):
            sub = gxp[:, :, ky : ky + (ho - 1) * stride + 1 : stride,
                      kx : kx + (wo - 1) * stride + 1 : stride]
            sub += np.einsum("bohw,oc->bchw", gy, w[:, :, ky, kx], optimize=True)
    return gxp


def spmm(src, dst, wgt, x):
    """Sparse (COO) matmul: out[i] += w_e * x[dst_e] for each edge e."""
    out = np.zeros_like(x)
    if len(src):
        np.add.at(out, src, wgt[:, None].astype(x.dtype) * x[dst])
    return out


def radon_fwd(img, cos_t, sin_t, n_det, step):
    """Parallel-beam line integrals with bilinear sampling along each ray.

    Image is float64 (h, w); rays are sampled every ``step`` pixels and the
    samples summed * step.  Returns float64 (n_angles, n_det).
    """
    h, w = img.shape
    cy = (h - 1) / 2.0
    cx = (w - 1) / 2.0
    half = np.hypot(h, w) / 2.0
    ns = int(np.ceil(2.0 * half / step)) + 1
    # sample grid symmetric about s=0 so mirrored rays integrate identically
    s = (np.arange(ns) - (ns - 1) / 2.0) * step
    t = np.arange(n_det, dtype=np.float64) - (n_det - 1) / 2.0
    sino = np.empty((len(cos_t), n_det), dtype=np.float64)
    for a in range(len(cos_t)):
        ct, st = cos_t[a], sin_t[a]
        # detector axis u=(ct, st), ray axis v=(-st, ct) in (x, y)
        x = cx + t[:, None] * ct - s[None, :] * st
        y = cy + t[:, None] * st + s[None, :] * ct
        x0 = np.floor(x)
        y0 = np.floor(y)
        fx = x - x0
        fy = y - y0
        x0 = x0.astype(np.int64)
        y0 = y0.astype(np.int64)
        total = np.zeros((n_det, ns), dtype=np.float64)
        for dy in (0, 1):
            for dx in (0, 1):
                yy = y0 + dy
                xx = x0 + dx
                ww = (fy if dy else 1.0 - fy) * (fx if dx else 1.0 - fx)
                ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
                total += np.where(ok, img[yy.clip(0, h - 1), xx.clip(0, w - 1)] * ww, 0.0)
        sino[a] = total.sum(axis=1) * step
    return sino


def backproject(filt, cos_t, sin_t, h, w):
    """Backproject filtered projections; linear detector interpolation."""
    n_det = filt.shape[1]
    cy = (h - 1) / 2.0
    cx = (w - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    out = np.zeros((h, w), dtype=np.float64)
    tc = (n_det - 1) / 2.0
    for a in range(len(cos_t)):
        t = (xx - cx) * cos_t[a] + (yy - cy) * sin_t[a] + tc
        t0 = np.floor(t).astype(np.int64)
        f = t - t0
        t0c = t0.clip(0, n_det - 1)
        t1c = (t0 + 1).clip(0, n_det - 1)
        ok = (t >= 0) & (t <= n_det - 1)
        out += np.where(ok, filt[a, t0c] * (1.0 - f) + filt[a, t1c] * f, 0.0)
    return out
