"""Deterministic 2D resampling: nearest-neighbour and bilinear.

Bilinear uses align-corners-false sampling with edge clamping, the common
deep-learning default.  Resampling a map to its own size is the identity
for both modes.
"""

import numpy as np

from .errors import InvalidArgumentError


def _check_target(target):
    h, w = int(target[0]), int(target[1])
    if h < 1 or w < 1:
        raise InvalidArgumentError(f"target dims must be >= 1, got {target}")
    return h, w


def resize_nearest(src, target):
    """Index-map nearest resize: out[i,j] = src[floor(i*H/h), floor(j*W/w)]."""
    src = np.asarray(src)
    if src.ndim != 2:
        raise InvalidArgumentError(f"expected 2D input, got rank {src.ndim}")
    h, w = _check_target(target)
    sh, sw = src.shape
    rows = (np.arange(h, dtype=np.int64) * sh) // h
    cols = (np.arange(w, dtype=np.int64) * sw) // w
    return src[np.ix_(rows, cols)].copy()


def _axis_weights(src_len, dst_len):
    """Align-corners-false sample positions: lower index, upper index, frac."""
    pos = (np.arange(dst_len, dtype=np.float64) + 0.5) * (src_len / dst_len) - 0.5
    i0 = np.floor(pos).astype(np.int64)
    frac = pos - i0
    i1 = np.clip(i0 + 1, 0, src_len - 1)
    i0 = np.clip(i0, 0, src_len - 1)
    return i0, i1, frac


def resize_bilinear(src, target):
    src = np.asarray(src, dtype=np.float32)
    if src.ndim != 2:
        raise InvalidArgumentError(f"expected 2D input, got rank {src.ndim}")
    h, w = _check_target(target)
    r0, r1, fr = _axis_weights(src.shape[0], h)
    c0, c1, fc = _axis_weights(src.shape[1], w)
    s = src.astype(np.float64)
    top = s[np.ix_(r0, c0)] * (1 - fc) + s[np.ix_(r0, c1)] * fc
    bot = s[np.ix_(r1, c0)] * (1 - fc) + s[np.ix_(r1, c1)] * fc
    out = top * (1 - fr[:, None]) + bot * fr[:, None]
    return out.astype(np.float32)


def resize_bilinear_grad(grad_out, src_shape):
    """Adjoint of resize_bilinear: scatter output gradients to the source."""
    grad_out = np.asarray(grad_out)
    sh, sw = src_shape
    h, w = grad_out.shape
    r0, r1, fr = _axis_weights(sh, h)
    c0, c1, fc = _axis_weights(sw, w)
    g = grad_out.astype(np.float64)
    gx = np.zeros((sh, sw), dtype=np.float64)
    wr0 = (1 - fr)[:, None]
    wc0 = (1 - fc)[None, :]
    np.add.at(gx, np.ix_(r0, c0), g * wr0 * wc0)
    np.add.at(gx, np.ix_(r0, c1), g * wr0 * fc[None, :])
    np.add.at(gx, np.ix_(r1, c0), g * fr[:, None] * wc0)
    np.add.at(gx, np.ix_(r1, c1), g * fr[:, None] * fc[None, :])
    return gx.astype(grad_out.dtype)
