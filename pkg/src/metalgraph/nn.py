"""Trainable layers, parameter initialization, and the Adam optimizer.

Every parameter is seeded from (master seed, crc32 of its name), so two
networks sharing layer names get bit-identical shared weights no matter
how many extra parameters either one allocates.
"""

import zlib

import numpy as np

from . import autodiff as ad
from .autodiff import DiffTensor


class Parameter(DiffTensor):
    """DiffTensor leaf with a stable name and Adam moment buffers."""

    __slots__ = ("name", "m", "v")

    def __init__(self, value, name):
        super().__init__(np.asarray(value, dtype=np.float32))
        self.name = name
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)


def param_rng(name, seed):
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode())])))


def glorot_uniform(shape, fan_in, fan_out, name, seed):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return param_rng(name, seed).uniform(-limit, limit, size=shape).astype(np.float32)


class Conv2d:
    def __init__(self, cin, cout, k, stride=1, zero_init=False, seed=0, name="conv"):
        self.stride = stride
        if zero_init:
            w = np.zeros((cout, cin, k, k), dtype=np.float32)
        else:
            w = glorot_uniform((cout, cin, k, k), cin * k * k, cout * k * k,
                               name + ".w", seed)
        self.w = Parameter(w, name + ".w")
        self.b = Parameter(np.zeros(cout, dtype=np.float32), name + ".b")

    def __call__(self, x):
        return ad.conv2d(x, self.w, self.b, stride=self.stride)

    def params(self):
        return [self.w, self.b]

    def buffers(self):
        return {}


class BatchNorm2d:
    def __init__(self, channels, name="bn", eps=1e-5, momentum=0.1):
        self.name = name
        self.eps = eps
        self.momentum = momentum
        self.gamma = Parameter(np.ones(channels, dtype=np.float32), name + ".gamma")
        self.beta = Parameter(np.zeros(channels, dtype=np.float32), name + ".beta")
        self.state = {
            "running_mean": np.zeros(channels, dtype=np.float32),
            "running_var": np.ones(channels, dtype=np.float32),
        }

    def __call__(self, x, train):
        return ad.batch_norm(x, self.gamma, self.beta, self.state, train,
                             eps=self.eps, momentum=self.momentum)

    def params(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return {self.name + ".running_mean": self.state["running_mean"],
                self.name + ".running_var": self.state["running_var"]}

    def load_buffers(self, d):
        self.state["running_mean"] = d[self.name + ".running_mean"].copy()
        self.state["running_var"] = d[self.name + ".running_var"].copy()


class ConvBNReLU:
    """3x3 (or 1x1) convolution + batch norm + ReLU."""

    def __init__(self, cin, cout, k=3, stride=1, seed=0, name="cbr"):
        self.conv = Conv2d(cin, cout, k, stride=stride, seed=seed, name=name + ".conv")
        self.bn = BatchNorm2d(cout, name=name + ".bn")

    def __call__(self, x, train):
        return ad.relu(self.bn(self.conv(x), train))

    def params(self):
        return self.conv.params() + self.bn.params()

    def buffers(self):
        return self.bn.buffers()


class Mlp2:
    """Two-layer per-pixel MLP on a scalar field: 1 -> width -> width."""

    def __init__(self, width, seed=0, name="mlp"):
        self.fc1 = Conv2d(1, width, 1, seed=seed, name=name + ".fc1")
        self.fc2 = Conv2d(width, width, 1, seed=seed, name=name + ".fc2")

    def __call__(self, r_field):
        return self.fc2(ad.relu(self.fc1(r_field)))

    def params(self):
        return self.fc1.params() + self.fc2.params()

    def buffers(self):
        return {}


def adam_step(params, lr, step, beta1=0.5, beta2=0.999, eps=1e-8):
    """One Adam update with bias correction; gradients zeroed afterwards."""
    bc1 = 1.0 - beta1 ** step
    bc2 = 1.0 - beta2 ** step
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.value)
        g = g.astype(np.float32, copy=False)
        p.m = beta1 * p.m + (1.0 - beta1) * g
        p.v = beta2 * p.v + (1.0 - beta2) * (g * g)
        mhat = p.m / bc1
        vhat = p.v / bc2
        p.value = p.value - lr * mhat / (np.sqrt(vhat) + eps)
        p.grad = None


class Adam:
    def __init__(self, params, lr, beta1=0.5, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0

    def step(self, lr=None):
        self.t += 1
        adam_step(self.params, self.lr if lr is None else lr, self.t,
                  self.beta1, self.beta2, self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
