"""Graph-routed mixture-of-experts block.

A GCN-informed router produces a per-pixel softmax over K expert
branches; expert outputs are convexly fused and added back to the input
through a zero-initialized projection, so the block is an exact identity
at initialization.  Each instance also emits a single-channel attention
map used for the geometric alignment supervision.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import InvalidArgumentError
from .nn import Conv2d, ConvBNReLU, Mlp2, Parameter, glorot_uniform
from .polar import (DEFAULT_K_ANGULAR, DEFAULT_K_RADIAL, DEFAULT_SIGMA,
                    build_graph_context)


@dataclass
class GraphMoeConfig:
    experts: int = 3
    channel_cap: int = 128           # graph width = min(channels, cap)
    k_ang: int = DEFAULT_K_ANGULAR
    k_rad: int = DEFAULT_K_RADIAL
    sigma: float = DEFAULT_SIGMA
    enable_angular: bool = True
    enable_radial: bool = True
    enable_density_reweight: bool = True

    def __post_init__(self):
        if self.experts < 1:
            raise InvalidArgumentError(f"expert count must be >= 1, got {self.experts}")

    def effective_k(self):
        return (self.k_ang if self.enable_angular else 0,
                self.k_rad if self.enable_radial else 0)


def make_context(mask, density, n_implants, feature_hw, cfg):
    """Per-sample, per-scale graph context under the ablation switches."""
    k_ang, k_rad = cfg.effective_k()
    return build_graph_context(mask, density, n_implants, feature_hw,
                               k_ang=k_ang, k_rad=k_rad, sigma=cfg.sigma,
                               reweight_by_density=cfg.enable_density_reweight)


def route_and_fuse(w_map, experts):
    """Per-pixel convex combination: sum_k w[:, k] * U_k."""
    k = w_map.value.shape[1]
    if len(experts) != k:
        raise InvalidArgumentError(
            f"routing map has {k} channels but {len(experts)} experts given")
    fused = None
    for i, u in enumerate(experts):
        if u.value.shape[0] != w_map.value.shape[0] or u.value.shape[2:] != w_map.value.shape[2:]:
            raise InvalidArgumentError("expert/routing map shapes disagree")
        term = ad.mul(ad.narrow(w_map, 1, i, 1), u)
        fused = term if fused is None else ad.add(fused, term)
    return fused


class GraphMoE:
    """One instance per insertion scale; owns router, experts, and heads."""

    def __init__(self, channels, cfg=None, seed=0, name="moe"):
        cfg = cfg or GraphMoeConfig()
        cg = min(channels, cfg.channel_cap)
        if cg < 2 or cg % 2 != 0:
            raise InvalidArgumentError(f"graph width must be even and >= 2, got {cg}")
        self.cfg = cfg
        self.channels = channels
        self.cg = cg
        self.reduce = Conv2d(channels, cg, 1, seed=seed, name=name + ".reduce")
        self.radius_mlp = Mlp2(cg, seed=seed, name=name + ".radius_mlp")
        self.gcn_w = Parameter(
            glorot_uniform((cg, cg), cg, cg, name + ".gcn.w", seed), name + ".gcn.w")
        self.gcn_b = Parameter(np.zeros(cg, dtype=np.float32), name + ".gcn.b")
        # routing logits start at zero: w = 1/K everywhere at init
        self.router = Conv2d(cg, cfg.experts, 1, zero_init=True,
                             seed=seed, name=name + ".router")
        self.experts = [ConvBNReLU(cg, cg, 3, seed=seed, name=f"{name}.expert{k}")
                        for k in range(cfg.experts)]
        # zero-initialized projection makes the block an identity at init
        self.project = Conv2d(cg, channels, 1, zero_init=True,
                              seed=seed, name=name + ".project")
        self.scale_head = Conv2d(cg, 1, 1, seed=seed, name=name + ".scale_head")

    def __call__(self, z, contexts, train):
        """z: (B, C, h, w) DiffTensor; one GraphContext per sample.

        Returns (z_out, routing_map, scale_map).
        """
        bsz = z.value.shape[0]
        h, w = z.value.shape[2], z.value.shape[3]
        if len(contexts) != bsz:
            raise InvalidArgumentError("one graph context per sample required")
        for ctx in contexts:
            if ctx.shape != (h, w):
                raise InvalidArgumentError(
                    f"context grid {ctx.shape} does not match features {(h, w)}")
        dt = z.value.dtype
        zg = self.reduce(z)

        r_field = np.stack([ctx.polar.radius for ctx in contexts])[:, None]
        sin_emb = np.stack([ad.sinusoidal_embed(ctx.polar.theta, self.cg, dtype=dt)
                            for ctx in contexts])
        emb = self.radius_mlp(ad.constant(r_field.astype(dt)))
        hfeat = ad.add(ad.add(zg, emb), ad.constant(sin_emb))

        adjs = [ctx.adjacency for ctx in contexts]
        msg = ad.relu(ad.gcn_layer(hfeat, adjs, self.gcn_w, self.gcn_b))
        hhat = ad.add(msg, hfeat)

        w_map = ad.softmax_channels(self.router(hhat))
        expert_maps = [e(zg, train) for e in self.experts]
        fused = route_and_fuse(w_map, expert_maps)
        z_out = ad.add(z, self.project(fused))
        scale_map = self.scale_head(hhat)
        return z_out, w_map, scale_map

    def params(self):
        ps = (self.reduce.params() + self.radius_mlp.params()
              + [self.gcn_w, self.gcn_b] + self.router.params())
        for e in self.experts:
            ps += e.params()
        ps += self.project.params() + self.scale_head.params()
        return ps

    def buffers(self):
        out = {}
        for e in self.experts:
            out.update(e.buffers())
        return out


class AttentionAggregator:
    """Fuse per-scale attention maps into one global map at (H/4, W/4)."""

    def __init__(self, n_scales, seed=0, name="attn"):
        if n_scales < 1:
            raise InvalidArgumentError("need at least one scale map")
        self.fuse = Conv2d(n_scales, 1, 1, seed=seed, name=name + ".fuse")

    def __call__(self, scale_maps, target):
        resized = [ad.bilinear_resize(m, target) for m in scale_maps]
        return self.fuse(ad.concat(resized, axis=1) if len(resized) > 1 else resized[0])

    def params(self):
        return self.fuse.params()

    def buffers(self):
        return {}


def aggregate_attention(scale_maps, target, aggregator):
    if not scale_maps:
        raise InvalidArgumentError("need at least one scale map")
    return aggregator(scale_maps, target)
