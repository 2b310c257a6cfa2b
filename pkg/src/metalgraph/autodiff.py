"""Minimal reverse-mode automatic differentiation over numpy arrays.

A closed op set on a dynamically built graph: each op records its parents
and a backward closure; ``backward()`` topologically sorts and applies the
chain rule.  Gradients are additive across fan-out.  Arrays keep whatever
float dtype they are given (float32 in production, float64 in gradient
checks).
"""

import numpy as np

from . import kernels
from .errors import InvalidArgumentError, StateError
from .resample import resize_bilinear, resize_bilinear_grad


class DiffTensor:
    """Value + gradient + provenance in the computation graph."""

    __slots__ = ("value", "grad", "_parents", "_backward", "requires_grad")

    def __init__(self, value, parents=(), backward=None, requires_grad=True):
        self.value = np.asarray(value)
        self.grad = None
        self._parents = parents
        self._backward = backward
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def accum(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self, seed=None):
        """Reverse pass from this node; seed defaults to ones (scalar loss)."""
        if seed is None:
            if self.value.size != 1:
                raise InvalidArgumentError("backward() without seed needs a scalar")
            seed = np.ones_like(self.value)
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.accum(seed)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # light operator sugar used by the higher modules
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __repr__(self):
        return f"DiffTensor(shape={self.value.shape}, dtype={self.value.dtype})"


def constant(x, dtype=None):
    a = np.asarray(x, dtype=dtype)
    return DiffTensor(a, requires_grad=False)


def _wrap(x, like=None):
    if isinstance(x, DiffTensor):
        return x
    dtype = like.dtype if like is not None else None
    return constant(np.asarray(x, dtype=dtype))


def _unbroadcast(g, shape):
    """Reduce a broadcasted gradient back to ``shape``."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _binary(a, b, out_value, da, db):
    node = DiffTensor(out_value, parents=(a, b))

    def backward(g):
        if a.requires_grad:
            a.accum(_unbroadcast(da(g), a.value.shape))
        if b.requires_grad:
            b.accum(_unbroadcast(db(g), b.value.shape))

    node._backward = backward
    return node


def add(a, b):
    a = _wrap(a)
    b = _wrap(b, like=a)
    return _binary(a, b, a.value + b.value, lambda g: g, lambda g: g)


def sub(a, b):
    a = _wrap(a)
    b = _wrap(b, like=a)
    return _binary(a, b, a.value - b.value, lambda g: g, lambda g: -g)


def mul(a, b):
    a = _wrap(a)
    b = _wrap(b, like=a)
    return _binary(a, b, a.value * b.value,
                   lambda g: g * b.value, lambda g: g * a.value)


def div(a, b):
    a = _wrap(a)
    b = _wrap(b, like=a)
    return _binary(a, b, a.value / b.value,
                   lambda g: g / b.value,
                   lambda g: -g * a.value / (b.value * b.value))


def relu(x):
    node = DiffTensor(np.maximum(x.value, 0), parents=(x,))

    def backward(g):
        if x.requires_grad:
            x.accum(g * (x.value > 0))

    node._backward = backward
    return node


def exp(x):
    v = np.exp(x.value)
    node = DiffTensor(v, parents=(x,))

    def backward(g):
        if x.requires_grad:
            x.accum(g * v)

    node._backward = backward
    return node


def log(x):
    node = DiffTensor(np.log(x.value), parents=(x,))

    def backward(g):
        if x.requires_grad:
            x.accum(g / x.value)

    node._backward = backward
    return node


def absolute(x):
    node = DiffTensor(np.abs(x.value), parents=(x,))

    def backward(g):
        if x.requires_grad:
            x.accum(g * np.sign(x.value))

    node._backward = backward
    return node


def reduce_sum(x):
    node = DiffTensor(x.value.sum(dtype=np.float64).astype(x.dtype).reshape(()),
                      parents=(x,))

    def backward(g):
        if x.requires_grad:
            x.accum(np.broadcast_to(g, x.value.shape).astype(x.dtype))

    node._backward = backward
    return node


def reduce_mean(x):
    n = x.value.size
    node = DiffTensor((x.value.sum(dtype=np.float64) / n).astype(x.dtype).reshape(()),
                      parents=(x,))

    def backward(g):
        if x.requires_grad:
            x.accum(np.broadcast_to(g / n, x.value.shape).astype(x.dtype))

    node._backward = backward
    return node


def reshape(x, shape):
    node = DiffTensor(x.value.reshape(shape), parents=(x,))

    def backward(g):
        if x.requires_grad:
            x.accum(g.reshape(x.value.shape))

    node._backward = backward
    return node


def narrow(x, axis, start, length):
    """Contiguous slice along one axis."""
    idx = [slice(None)] * x.value.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    node = DiffTensor(x.value[idx], parents=(x,))

    def backward(g):
        if x.requires_grad:
            full = np.zeros_like(x.value)
            full[idx] = g
            x.accum(full)

    node._backward = backward
    return node


def concat(xs, axis=1):
    vals = [x.value for x in xs]
    node = DiffTensor(np.concatenate(vals, axis=axis), parents=tuple(xs))
    sizes = [v.shape[axis] for v in vals]

    def backward(g):
        off = 0
        for x, s in zip(xs, sizes):
            if x.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(off, off + s)
                x.accum(g[tuple(idx)])
            off += s

    node._backward = backward
    return node


def softmax_channels(x):
    """Softmax across axis 1 (channels) per spatial location."""
    v = x.value
    m = v.max(axis=1, keepdims=True)
    e = np.exp(v - m)
    y = e / e.sum(axis=1, keepdims=True)
    node = DiffTensor(y, parents=(x,))

    def backward(g):
        if x.requires_grad:
            dot = (g * y).sum(axis=1, keepdims=True)
            x.accum(y * (g - dot))

    node._backward = backward
    return node


def minmax_norm(x):
    """(x - min) / (max - min); constant input maps to all zeros.

    Subgradients at the extremes flow to the first (row-major) argmin /
    argmax element.
    """
    v = x.value
    lo = v.min()
    hi = v.max()
    rng = hi - lo
    if rng == 0:
        node = DiffTensor(np.zeros_like(v), parents=(x,))
        node._backward = lambda g: None
        return node
    amin = int(v.argmin())
    amax = int(v.argmax())
    out = (v - lo) / rng
    node = DiffTensor(out, parents=(x,))

    def backward(g):
        if not x.requires_grad:
            return
        gx = g / rng
        gs = g.sum()
        go = (g * out).sum()
        flat = gx.reshape(-1)
        flat[amin] += (-gs + go) / rng
        flat[amax] -= go / rng
        x.accum(gx.reshape(v.shape))

    node._backward = backward
    return node


def conv2d(x, w, b, stride=1):
    """Same-padded cross-correlation; kernel size 1 or 3, stride 1 or 2.

    x: (B, Cin, H, W);  w: (Cout, Cin, k, k);  b: (Cout,).
    """
    k = w.value.shape[2]
    if k not in (1, 3) or w.value.shape[3] != k:
        raise InvalidArgumentError(f"kernel must be 1x1 or 3x3, got {w.value.shape[2:]}")
    if stride not in (1, 2):
        raise InvalidArgumentError(f"stride must be 1 or 2, got {stride}")
    if x.value.ndim != 4 or x.value.shape[1] != w.value.shape[1]:
        raise InvalidArgumentError(
            f"input {x.value.shape} incompatible with weight {w.value.shape}")
    pad = k // 2
    xp = np.pad(x.value, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    hi, wi = x.value.shape[2], x.value.shape[3]
    ho = (hi + 2 * pad - k) // stride + 1
    wo = (wi + 2 * pad - k) // stride + 1
    out = kernels.conv2d_fwd(np.ascontiguousarray(xp), w.value, b.value, stride, ho, wo)
    node = DiffTensor(out, parents=(x, w, b))

    def backward(g):
        g = np.ascontiguousarray(g)
        if w.requires_grad or b.requires_grad:
            gw, gb = kernels.conv2d_bwd_w(xp, g, k, k, stride)
            if w.requires_grad:
                w.accum(gw)
            if b.requires_grad:
                b.accum(gb)
        if x.requires_grad:
            gxp = kernels.conv2d_bwd_x(g, w.value, stride, hi + 2 * pad, wi + 2 * pad)
            x.accum(gxp[:, :, pad : pad + hi, pad : pad + wi] if pad else gxp)

    node._backward = backward
    return node


def batch_norm(x, gamma, beta, state, train, eps=1e-5, momentum=0.1):
    """Per-channel normalization over (batch, H, W).

    ``state`` is a dict with running_mean / running_var, updated in train
    mode.  Train mode requires batch >= 2.
    """
    v = x.value
    if v.ndim != 4:
        raise InvalidArgumentError("batch_norm expects (B, C, H, W)")
    axes = (0, 2, 3)
    if train:
        if v.shape[0] < 2:
            raise InvalidArgumentError("train-mode batch_norm needs batch >= 2")
        mean = v.mean(axis=axes)
        var = v.var(axis=axes)
        n = v.shape[0] * v.shape[2] * v.shape[3]
        unbiased = var * (n / max(n - 1, 1))
        state["running_mean"] = ((1 - momentum) * state["running_mean"]
                                 + momentum * mean.astype(np.float32))
        state["running_var"] = ((1 - momentum) * state["running_var"]
                                + momentum * unbiased.astype(np.float32))
    else:
        mean = state["running_mean"].astype(v.dtype)
        var = state["running_var"].astype(v.dtype)
    istd = 1.0 / np.sqrt(var + eps)
    xhat = (v - mean[None, :, None, None]) * istd[None, :, None, None]
    out = gamma.value[None, :, None, None] * xhat + beta.value[None, :, None, None]
    node = DiffTensor(out, parents=(x, gamma, beta))

    def backward(g):
        if gamma.requires_grad:
            gamma.accum((g * xhat).sum(axis=axes))
        if beta.requires_grad:
            beta.accum(g.sum(axis=axes))
        if not x.requires_grad:
            return
        gxhat = g * gamma.value[None, :, None, None]
        if train:
            n = v.shape[0] * v.shape[2] * v.shape[3]
            s1 = gxhat.sum(axis=axes, keepdims=True)
            s2 = (gxhat * xhat).sum(axis=axes, keepdims=True)
            gx = (istd[None, :, None, None] / n) * (n * gxhat - s1 - xhat * s2)
        else:
            gx = gxhat * istd[None, :, None, None]
        x.accum(gx.astype(v.dtype))

    node._backward = backward
    return node


def gcn_layer(x, adjacencies, w, b):
    """Graph convolution A @ H @ W + b applied per sample.

    x: (B, C, h, w); ``adjacencies``: one finalized SparseAdjacency per
    sample over n = h*w nodes; w: (C, C); b: (C,).  Relies on the
    adjacency being symmetric (A^T = A) for the input gradient.
    """
    v = x.value
    bsz, c, h, ww = v.shape
    n = h * ww
    for adj in adjacencies:
        if not adj.finalized:
            raise StateError("adjacency must be finalized before gcn_layer")
        if adj.n != n:
            raise InvalidArgumentError(f"adjacency has {adj.n} nodes, grid has {n}")
    if len(adjacencies) != bsz:
        raise InvalidArgumentError("one adjacency per sample required")
    mids = []
    out = np.empty_like(v)
    for i, adj in enumerate(adjacencies):
        hn = v[i].reshape(c, n).T
        mid = adj.matmul(np.ascontiguousarray(hn))
        mids.append(mid)
        y = mid @ w.value + b.value
        out[i] = y.T.reshape(c, h, ww)
    node = DiffTensor(out, parents=(x, w, b))

    def backward(g):
        gx = np.zeros_like(v) if x.requires_grad else None
        for i, adj in enumerate(adjacencies):
            gy = g[i].reshape(c, n).T
            if w.requires_grad:
                w.accum(mids[i].T @ gy)
            if b.requires_grad:
                b.accum(gy.sum(axis=0))
            if gx is not None:
                gm = gy @ w.value.T
                gx[i] = adj.matmul(np.ascontiguousarray(gm)).T.reshape(c, h, ww)
        if gx is not None:
            x.accum(gx)

    node._backward = backward
    return node


def upsample_nearest2x(x):
    v = x.value
    out = v.repeat(2, axis=2).repeat(2, axis=3)
    node = DiffTensor(out, parents=(x,))

    def backward(g):
        if x.requires_grad:
            b, c, h, w = v.shape
            x.accum(g.reshape(b, c, h, 2, w, 2).sum(axis=(3, 5)))

    node._backward = backward
    return node


def bilinear_resize(x, target):
    """Differentiable align-corners-false bilinear resize of (B, C, H, W)."""
    v = x.value
    b, c = v.shape[0], v.shape[1]
    th, tw = int(target[0]), int(target[1])
    out = np.empty((b, c, th, tw), dtype=v.dtype)
    for i in range(b):
        for j in range(c):
            out[i, j] = resize_bilinear(v[i, j], (th, tw)).astype(v.dtype)
    node = DiffTensor(out, parents=(x,))

    def backward(g):
        if not x.requires_grad:
            return
        gx = np.empty_like(v)
        for i in range(b):
            for j in range(c):
                gx[i, j] = resize_bilinear_grad(g[i, j], v.shape[2:])
        x.accum(gx)

    node._backward = backward
    return node


def sinusoidal_embed(theta, channels, dtype=np.float32):
    """Fixed positional embedding of an angle field: interleaved
    sin/cos of (2^j * theta), j = 0..channels/2 - 1.  Returns a plain
    array (H, W) -> (channels, H, W); no gradient flows to theta."""
    if channels % 2 != 0:
        raise InvalidArgumentError(f"embedding width must be even, got {channels}")
    theta = np.asarray(theta, dtype=np.float64)
    out = np.empty((channels,) + theta.shape, dtype=dtype)
    for j in range(channels // 2):
        f = float(2 ** j)
        out[2 * j] = np.sin(f * theta)
        out[2 * j + 1] = np.cos(f * theta)
    return out
