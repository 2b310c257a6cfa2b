"""Tiny encoder-decoder restoration network hosting the graph-routed MoE.

Three strided-conv encoder stages (features at H/2, H/4, H/8), a MoE
block after each configured downsampling, and a nearest-upsample decoder
with skip connections.  The final 1x1 head predicts a residual added to
the input.  Per-scale attention maps are fused into a single map at
(H/4, W/4) for the geometric alignment supervision.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import FormatError, InvalidArgumentError
from .moe import AttentionAggregator, GraphMoE, GraphMoeConfig
from .nn import Conv2d, ConvBNReLU
from .tensorio import load_tensor, save_tensor

SCALES = (2, 4, 8)


@dataclass
class BackboneConfig:
    base_channels: int = 16
    graphmoe_scales: tuple = SCALES
    enable_graphmoe: bool = True
    moe: GraphMoeConfig = field(default_factory=GraphMoeConfig)

    def __post_init__(self):
        bad = set(self.graphmoe_scales) - set(SCALES)
        if bad:
            raise InvalidArgumentError(f"unsupported insertion scales {sorted(bad)}")
        self.graphmoe_scales = tuple(s for s in SCALES if s in self.graphmoe_scales)


@dataclass
class NetOutputs:
    prediction: object                  # DiffTensor (B, 1, H, W)
    routing: dict                       # scale -> DiffTensor (B, K, h, w)
    scale_maps: dict                    # scale -> DiffTensor (B, 1, h, w)
    attention: object = None            # DiffTensor (B, 1, H/4, W/4) or None


class RestorationNet:
    def __init__(self, cfg=None, seed=0):
        cfg = cfg or BackboneConfig()
        self.cfg = cfg
        self.seed = seed
        b = cfg.base_channels
        c1, c2, c3 = b, 2 * b, 4 * b
        self.chans = {2: c1, 4: c2, 8: c3}
        self.down = {
            2: ConvBNReLU(1, c1, 3, stride=2, seed=seed, name="enc2.down"),
            4: ConvBNReLU(c1, c2, 3, stride=2, seed=seed, name="enc4.down"),
            8: ConvBNReLU(c2, c3, 3, stride=2, seed=seed, name="enc8.down"),
        }
        self.block = {
            2: ConvBNReLU(c1, c1, 3, seed=seed, name="enc2.block"),
            4: ConvBNReLU(c2, c2, 3, seed=seed, name="enc4.block"),
            8: ConvBNReLU(c3, c3, 3, seed=seed, name="enc8.block"),
        }
        self.moe = {}
        self.aggregator = None
        if cfg.enable_graphmoe and cfg.graphmoe_scales:
            for s in cfg.graphmoe_scales:
                self.moe[s] = GraphMoE(self.chans[s], cfg.moe, seed=seed,
                                       name=f"moe{s}")
            self.aggregator = AttentionAggregator(len(cfg.graphmoe_scales),
                                                  seed=seed, name="attn")
        self.dec4 = ConvBNReLU(c3 + c2, c2, 3, seed=seed, name="dec4")
        self.dec2 = ConvBNReLU(c2 + c1, c1, 3, seed=seed, name="dec2")
        self.dec1 = ConvBNReLU(c1, c1, 3, seed=seed, name="dec1")
        self.head = Conv2d(c1, 1, 1, seed=seed, name="head")

    def forward(self, x, contexts=None, train=False):
        """x: (B, 1, H, W) array or DiffTensor; H, W divisible by 8.

        ``contexts``: {scale: [GraphContext]*B} for each MoE scale; may be
        None when the MoE is disabled.
        """
        if not isinstance(x, ad.DiffTensor):
            x = ad.constant(np.asarray(x))
        h, w = x.value.shape[2], x.value.shape[3]
        if h % 8 or w % 8:
            raise InvalidArgumentError(f"input dims must divide by 8, got {(h, w)}")
        if self.moe and not contexts:
            raise InvalidArgumentError("graph contexts required when MoE is enabled")
        routing, scale_maps = {}, {}
        feats = x
        skips = {}
        for s in SCALES:
            feats = self.down[s](feats, train)
            if s in self.moe:
                feats, w_map, s_map = self.moe[s](feats, contexts[s], train)
                routing[s] = w_map
                scale_maps[s] = s_map
            feats = self.block[s](feats, train)
            skips[s] = feats
        u = ad.upsample_nearest2x(skips[8])
        m = self.dec4(ad.concat([u, skips[4]], axis=1), train)
        u = ad.upsample_nearest2x(m)
        m = self.dec2(ad.concat([u, skips[2]], axis=1), train)
        m = self.dec1(ad.upsample_nearest2x(m), train)
        pred = ad.add(x, self.head(m))
        attention = None
        if self.aggregator is not None:
            maps = [scale_maps[s] for s in self.cfg.graphmoe_scales]
            attention = self.aggregator(maps, (h // 4, w // 4))
        return NetOutputs(prediction=pred, routing=routing,
                          scale_maps=scale_maps, attention=attention)

    def params(self):
        ps = []
        for s in SCALES:
            ps += self.down[s].params()
            if s in self.moe:
                ps += self.moe[s].params()
            ps += self.block[s].params()
        ps += self.dec4.params() + self.dec2.params() + self.dec1.params()
        ps += self.head.params()
        if self.aggregator is not None:
            ps += self.aggregator.params()
        return ps

    def buffers(self):
        out = {}
        for s in SCALES:
            out.update(self.down[s].buffers())
            if s in self.moe:
                out.update(self.moe[s].buffers())
            out.update(self.block[s].buffers())
        out.update(self.dec4.buffers())
        out.update(self.dec2.buffers())
        out.update(self.dec1.buffers())
        return out

    def param_names(self):
        return [p.name for p in self.params()]


def net_config_dict(net):
    m = net.cfg.moe
    return {
        "base_channels": net.cfg.base_channels,
        "graphmoe_scales": list(net.cfg.graphmoe_scales),
        "enable_graphmoe": net.cfg.enable_graphmoe,
        "seed": net.seed,
        "moe": {"experts": m.experts, "channel_cap": m.channel_cap,
                "k_ang": m.k_ang, "k_rad": m.k_rad, "sigma": m.sigma,
                "enable_angular": m.enable_angular,
                "enable_radial": m.enable_radial,
                "enable_density_reweight": m.enable_density_reweight},
    }


def save_checkpoint(net, out_dir, step=0, extra=None):
    """Named parameters + BN buffers as binary tensors plus a manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    idx = 0
    for p in net.params():
        fn = f"p{idx:04d}.bt"
        save_tensor(out / fn, p.value)
        entries.append({"name": p.name, "kind": "param",
                        "shape": list(p.value.shape), "file": fn})
        idx += 1
    for name, buf in sorted(net.buffers().items()):
        fn = f"p{idx:04d}.bt"
        save_tensor(out / fn, buf)
        entries.append({"name": name, "kind": "buffer",
                        "shape": list(buf.shape), "file": fn})
        idx += 1
    manifest = {"step": int(step), "entries": entries}
    if extra:
        manifest.update(extra)
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)


def load_checkpoint(net, ckpt_dir):
    ckpt = Path(ckpt_dir)
    with open(ckpt / "manifest.json") as f:
        manifest = json.load(f)
    by_name = {e["name"]: e for e in manifest["entries"]}
    for p in net.params():
        e = by_name.get(p.name)
        if e is None:
            raise FormatError(f"checkpoint missing parameter {p.name}")
        a = load_tensor(ckpt / e["file"])
        if a.shape != p.value.shape:
            raise FormatError(f"{p.name}: shape {a.shape} != {p.value.shape}")
        p.value = a
    bufs = net.buffers()
    for name, buf in bufs.items():
        e = by_name.get(name)
        if e is None:
            raise FormatError(f"checkpoint missing buffer {name}")
        a = load_tensor(ckpt / e["file"])
        buf[...] = a
    return manifest
