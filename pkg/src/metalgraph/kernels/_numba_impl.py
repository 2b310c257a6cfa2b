"""Numba-compiled hot kernels; signatures mirror ``_numpy_impl``."""

import numpy as np
from numba import njit

BACKEND_NAME = "numba"


@njit(cache=True)
def accumulate_lines(segments, h, w):
    acc = np.zeros((h, w), dtype=np.int64)
    for e in range(segments.shape[0]):
        r0 = segments[e, 0]
        c0 = segments[e, 1]
        r1 = segments[e, 2]
        c1 = segments[e, 3]
        # canonical endpoint order makes raster(p,q) == raster(q,p) as sets
        if r1 < r0 or (r1 == r0 and c1 < c0):
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


@njit(cache=True)
def nearest_offsets(metal_rc, h, w):
    m = metal_rc.shape[0]
    dr = np.empty((h, w), dtype=np.int32)
    dc = np.empty((h, w), dtype=np.int32)
    for r in range(h):
        for c in range(w):
            best = np.int64(1) << 62
            br = 0
            bc = 0
            for k in range(m):
                ddr = r - metal_rc[k, 0]
                ddc = c - metal_rc[k, 1]
                d2 = ddr * ddr + ddc * ddc
                if d2 < best:
                    best = d2
                    br = ddr
                    bc = ddc
            dr[r, c] = br
            dc[r, c] = bc
    return dr, dc


@njit(cache=True)
def _topk_insert(best_w, best_j, count, k, wj, j):
    if count < k:
        pos = count
        while pos > 0 and best_w[pos - 1] < wj:
            best_w[pos] = best_w[pos - 1]
            best_j[pos] = best_j[pos - 1]
            pos -= 1
        best_w[pos] = wj
        best_j[pos] = j
        return count + 1
    if wj > best_w[k - 1]:
        pos = k - 1
        while pos > 0 and best_w[pos - 1] < wj:
            best_w[pos] = best_w[pos - 1]
            best_j[pos] = best_j[pos - 1]
            pos -= 1
        best_w[pos] = wj
        best_j[pos] = j
    return count


@njit(cache=True)
def topk_edges(theta, rad, k_ang, k_rad, sigma):
    n = theta.shape[0]
    inv = 1.0 / (2.0 * sigma * sigma)
    per = k_ang + k_rad
    src = np.empty(n * per, dtype=np.int64)
    dst = np.empty(n * per, dtype=np.int64)
    wgt = np.empty(n * per, dtype=np.float64)
    two_pi = 2.0 * np.pi
    aw = np.empty(max(k_ang, 1), dtype=np.float64)
    aj = np.empty(max(k_ang, 1), dtype=np.int64)
    rw = np.empty(max(k_rad, 1), dtype=np.float64)
    rj = np.empty(max(k_rad, 1), dtype=np.int64)
    out = 0
    for i in range(n):
        na = 0
        nr = 0
        ti = theta[i]
        ri = rad[i]
        for j in range(n):
            if j == i:
                continue
            if k_ang > 0:
                d = abs(theta[j] - ti)
                if d > two_pi - d:
                    d = two_pi - d
                na = _topk_insert(aw, aj, na, k_ang, np.exp(-(d * d) * inv), j)
            if k_rad > 0:
                d = rad[j] - ri
                nr = _topk_insert(rw, rj, nr, k_rad, np.exp(-(d * d) * inv), j)
        for k in range(na):
            src[out] = i
            dst[out] = aj[k]
            wgt[out] = aw[k]
            out += 1
        for k in range(nr):
            src[out] = i
            dst[out] = rj[k]
            wgt[out] = rw[k]
            out += 1
    return src[:out], dst[:out], wgt[:out]


@njit(cache=True, fastmath=True)
def conv2d_fwd(xp, w, b, stride, ho, wo):
    bsz, ci = xp.shape[0], xp.shape[1]
    co, kh, kw = w.shape[0], w.shape[2], w.shape[3]
    out = np.empty((bsz, co, ho, wo), dtype=xp.dtype)
    for bi in range(bsz):
        for o in range(co):
            acc = np.full((ho, wo), b[o], dtype=xp.dtype)
            for c in range(ci):
                for ky in range(kh):
                    for kx in range(kw):
                        wv = w[o, c, ky, kx]
                        for oy in range(ho):
                            row = xp[bi, c, oy * stride + ky]
                            for ox in range(wo):
                                acc[oy, ox] += wv * row[ox * stride + kx]
            out[bi, o] = acc
    return out


@njit(cache=True, fastmath=True)
def conv2d_bwd_w(xp, gy, kh, kw, stride):
    bsz, ci = xp.shape[0], xp.shape[1]
    co, ho, wo = gy.shape[1], gy.shape[2], gy.shape[3]
    gw = np.zeros((co, ci, kh, kw), dtype=xp.dtype)
    gb = np.zeros(co, dtype=xp.dtype)
    for bi in range(bsz):
        for o in range(co):
            for c in range(ci):
                for ky in range(kh):
                    for kx in range(kw):
                        acc = xp.dtype.type(0.0)
                        for oy in range(ho):
                            row = xp[bi, c, oy * stride + ky]
                            grow = gy[bi, o, oy]
                            for ox in range(wo):
                                acc += grow[ox] * row[ox * stride + kx]
                        gw[o, c, ky, kx] += acc
            for oy in range(ho):
                for ox in range(wo):
                    gb[o] += gy[bi, o, oy, ox]
    return gw, gb


@njit(cache=True, fastmath=True)
def conv2d_bwd_x(gy, w, stride, hp, wp):
    bsz, co, ho, wo = gy.shape
    ci, kh, kw = w.shape[1], w.shape[2], w.shape[3]
    gxp = np.zeros((bsz, ci, hp, wp), dtype=gy.dtype)
    for bi in range(bsz):
        for o in range(co):
            for c in range(ci):
                for ky in range(kh):
                    for kx in range(kw):
                        wv = w[o, c, ky, kx]
                        for oy in range(ho):
                            grow = gy[bi, o, oy]
                            xrow = gxp[bi, c, oy * stride + ky]
                            for ox in range(wo):
                                xrow[ox * stride + kx] += wv * grow[ox]
    return gxp


@njit(cache=True)
def spmm(src, dst, wgt, x):
    out = np.zeros_like(x)
    c = x.shape[1]
    for e in range(src.shape[0]):
        i = src[e]
        j = dst[e]
        we = x.dtype.type(wgt[e])
        for k in range(c):
            out[i, k] += we * x[j, k]
    return out


@njit(cache=True, fastmath=True)
def _bilinear_at(img, y, x, h, w):
    y0 = int(np.floor(y))
    x0 = int(np.floor(x))
    fy = y - y0
    fx = x - x0
    v = 0.0
    for dy in range(2):
        yy = y0 + dy
        if yy < 0 or yy >= h:
            continue
        wy = fy if dy == 1 else 1.0 - fy
        for dx in range(2):
            xx = x0 + dx
            if xx < 0 or xx >= w:
                continue
            wx = fx if dx == 1 else 1.0 - fx
            v += img[yy, xx] * wy * wx
    return v


@njit(cache=True, fastmath=True)
def radon_fwd(img, cos_t, sin_t, n_det, step):
    h, w = img.shape
    cy = (h - 1) / 2.0
    cx = (w - 1) / 2.0
    half = np.hypot(float(h), float(w)) / 2.0
    ns = int(np.ceil(2.0 * half / step)) + 1
    sino = np.zeros((len(cos_t), n_det), dtype=np.float64)
    for a in range(len(cos_t)):
        ct = cos_t[a]
        st = sin_t[a]
        for d in range(n_det):
            t = d - (n_det - 1) / 2.0
            total = 0.0
            for k in range(ns):
                # symmetric about s=0 so mirrored rays integrate identically
                s = (k - (ns - 1) / 2.0) * step
                x = cx + t * ct - s * st
                y = cy + t * st + s * ct
                total += _bilinear_at(img, y, x, h, w)
            sino[a, d] = total * step
    return sino


@njit(cache=True, fastmath=True)
def backproject(filt, cos_t, sin_t, h, w):
    n_det = filt.shape[1]
    cy = (h - 1) / 2.0
    cx = (w - 1) / 2.0
    tc = (n_det - 1) / 2.0
    out = np.zeros((h, w), dtype=np.float64)
    for a in range(len(cos_t)):
        ct = cos_t[a]
        st = sin_t[a]
        for r in range(h):
            base = (r - cy) * st + tc
            for c in range(w):
                t = (c - cx) * ct + base
                if t < 0.0 or t > n_det - 1:
                    continue
                t0 = int(np.floor(t))
                f = t - t0
                t1 = t0 + 1
                if t1 > n_det - 1:
                    t1 = n_det - 1
                out[r, c] += filt[a, t0] * (1.0 - f) + filt[a, t1] * f
    return out
