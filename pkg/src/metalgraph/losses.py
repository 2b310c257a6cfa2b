"""Training losses and the clinician-steerable fusion operator."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import DiffTensor
from .errors import InvalidArgumentError

DEFAULT_LAMBDA = 0.1
KL_FLOOR = 1e-8


def minmax_norm(a):
    """(x - min) / (max - min) on a plain array; constant input -> zeros."""
    a = np.asarray(a, dtype=np.float32)
    lo = a.min()
    hi = a.max()
    if hi == lo:
        return np.zeros_like(a)
    return (a - lo) / (hi - lo)


def _as_node(x):
    return x if isinstance(x, DiffTensor) else ad.constant(np.asarray(x))


def geometric_alignment_loss(g_pred, g_target, n_implants, variant="mse"):
    """Alignment between the predicted attention map and the geometric
    density map, both min-max normalized.  Exactly 0 when n_implants <= 1.

    ``g_pred`` may be a DiffTensor (training) or array; ``g_target`` is a
    plain array already resized to g_pred's resolution.
    """
    pred = _as_node(g_pred)
    target = np.asarray(g_target, dtype=np.float64)
    if tuple(np.squeeze(pred.value).shape) != tuple(np.squeeze(target).shape):
        raise InvalidArgumentError(
            f"shape mismatch {pred.value.shape} vs {target.shape}")
    if variant not in ("mse", "kl"):
        raise InvalidArgumentError(f"unknown variant {variant!r}")
    if n_implants <= 1:
        return ad.constant(np.zeros((), dtype=pred.dtype))
    pn = ad.minmax_norm(pred)
    tn = minmax_norm(target).astype(np.float64)
    if variant == "mse":
        d = ad.sub(pn, ad.constant(tn.reshape(pred.value.shape).astype(pred.dtype)))
        return ad.reduce_mean(ad.mul(d, d))
    # kl: renormalize both maps to probability simplexes with a floor
    p_shift = ad.add(pn, KL_FLOOR)
    p = ad.div(p_shift, ad.reduce_sum(p_shift))
    t = tn.reshape(-1) + KL_FLOOR
    t = t / t.sum()
    t = t.reshape(pred.value.shape).astype(pred.dtype)
    # KL(target || pred) = sum t * (log t - log p)
    ent = float(np.sum(t * np.log(t)))
    cross = ad.reduce_sum(ad.mul(ad.constant(t), ad.log(p)))
    return ad.sub(ad.constant(np.asarray(ent, dtype=pred.dtype)), cross)


@dataclass
class LossReport:
    l1: float
    graph: float
    total: float
    lam: float


def total_loss(pred, target, graph_loss=None, lam=DEFAULT_LAMBDA):
    """Mean absolute error + lam * graph loss.

    Returns (scalar DiffTensor, LossReport).
    """
    pred = _as_node(pred)
    target = np.asarray(target)
    if pred.value.shape != target.shape:
        raise InvalidArgumentError(
            f"shape mismatch {pred.value.shape} vs {target.shape}")
    l1 = ad.reduce_mean(ad.absolute(ad.sub(pred, ad.constant(target.astype(pred.dtype)))))
    if graph_loss is None:
        graph_loss = ad.constant(np.zeros((), dtype=pred.dtype))
    total = ad.add(l1, ad.mul(graph_loss, np.asarray(lam, dtype=pred.dtype)))
    report = LossReport(l1=float(l1.value), graph=float(graph_loss.value),
                        total=float(total.value), lam=float(lam))
    return total, report


@dataclass
class FusionParams:
    threshold: float = 0.5
    tau: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise InvalidArgumentError(f"threshold must be in [0,1], got {self.threshold}")
        if not 0.0 <= self.tau <= 1.0:
            raise InvalidArgumentError(f"tau must be in [0,1], got {self.tau}")


def clinical_fuse(x, y_hat, attention, params):
    """Selective restoration: full output where attention >= threshold,
    user-blended elsewhere.

    out = M * y_hat + (1 - M) * (tau * y_hat + (1 - tau) * x),
    with M = attention >= threshold.
    """
    x = np.asarray(x, dtype=np.float32)
    y_hat = np.asarray(y_hat, dtype=np.float32)
    attention = np.asarray(attention, dtype=np.float32)
    if not (x.shape == y_hat.shape == attention.shape):
        raise InvalidArgumentError("input/prediction/attention shapes must match")
    m = (attention >= params.threshold).astype(np.float32)
    blended = params.tau * y_hat + (1.0 - params.tau) * x
    return m * y_hat + (1.0 - m) * blended
