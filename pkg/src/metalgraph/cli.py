"""Command-line entry point: the full pipeline as subcommands.

Exit codes: 0 success, 1 usage error, 2 data error, 3 selftest failure.
A ``key=value`` config file may preset any ``train`` option; explicit
command-line flags take precedence over the config file.
"""

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .backbone import BackboneConfig, RestorationNet, load_checkpoint
from .errors import DataError, FormatError, InvalidArgumentError, MetalGraphError
from .geometry import (boundary_pixels, build_geometric_graph,
                       connected_components, extract_metal_mask,
                       rasterize_density)
from .losses import FusionParams, clinical_fuse, minmax_norm
from .moe import GraphMoeConfig
from .polar import build_artifact_graph, compute_polar, empty_adjacency
from .resample import resize_bilinear, resize_nearest
from .selftest import run_selftest
from .sim import make_dataset
from .tensorio import (WINDOW_FULL, load_tensor, save_png_gray, save_tensor,
                       validate_mask)
from .train import Corpus, TrainConfig, evaluate, predict, render_table, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_SELFTEST = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _timestamp():
    return datetime.now(timezone.utc).isoformat()


def _add_common(p):
    p.add_argument("--seed", type=int, default=0, help="deterministic seed")


def build_parser():
    parser = _Parser(prog="metalgraph",
                     description="Geometry-aware graph-routed CT artifact reduction")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a paired phantom corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n-train", type=int, default=200)
    p.add_argument("--n-test", type=int, default=40)
    p.add_argument("--implants", default="2:3", help="LO:HI implants per image")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--beta", type=float, default=0.4)
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--fast", action="store_true",
                   help="analytic streaks instead of the projection round trip")
    _add_common(p)

    p = sub.add_parser("graph", help="build geometric + artifact graphs from an image")
    p.add_argument("--input", required=True, help=".bt HU image (or mask with --mask)")
    p.add_argument("--out", required=True)
    p.add_argument("--mask", action="store_true", help="input is already a binary mask")
    p.add_argument("--threshold-hu", type=float, default=2800.0)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--feature-size", type=int, default=32)
    p.add_argument("--sigma", type=float, default=2.0)
    p.add_argument("--k-ang", type=int, default=12)
    p.add_argument("--k-rad", type=int, default=4)
    _add_common(p)

    p = sub.add_parser("train", help="train the restoration network")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="key=value file; CLI flags override it")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--halve-every", type=int)
    p.add_argument("--lam", type=float)
    p.add_argument("--loss", choices=("mse", "kl"))
    p.add_argument("--scales", help="comma list from {2,4,8}")
    p.add_argument("--base-channels", type=int)
    p.add_argument("--experts", type=int)
    p.add_argument("--no-graphmoe", action="store_true")
    p.add_argument("--no-angular", action="store_true")
    p.add_argument("--no-radial", action="store_true")
    p.add_argument("--no-density-reweight", action="store_true")
    _add_common(p)

    p = sub.add_parser("infer", help="run a checkpoint on one corpus sample")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--routing", action="store_true",
                   help="also export per-scale routing maps (.bt + .png)")
    _add_common(p)

    p = sub.add_parser("fuse", help="clinician-steerable blending of a bundle")
    p.add_argument("--input", required=True, help="input HU tensor (.bt)")
    p.add_argument("--prediction", required=True)
    p.add_argument("--attention", required=True)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("export-ui", help="static viewer payload from a bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("selftest", help="run built-in oracle suites")
    p.add_argument("--quick", action="store_true")
    p.add_argument("--inject-sigma", type=float, default=None,
                   help=argparse.SUPPRESS)  # test hook
    _add_common(p)

    p = sub.add_parser("evaluate", help="metrics table for a checkpoint")
    p.add_argument("--checkpoint", help="omit to score the identity mapping")
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--out", help="write JSON report here")
    _add_common(p)
    return parser


def cmd_simulate(args):
    lo, _, hi = args.implants.partition(":")
    manifest = make_dataset(args.out, args.n_train, args.n_test, args.seed,
                            implants=(int(lo), int(hi or lo)), size=args.size,
                            beta=args.beta, gamma=args.gamma, fast=args.fast)
    print(f"wrote {manifest['splits']['train']} train / "
          f"{manifest['splits']['test']} test samples to {args.out}")
    return EXIT_OK


def cmd_graph(args):
    try:
        img = load_tensor(args.input)
    except (OSError, FormatError) as e:
        print(f"error: cannot read {args.input}: {e}", file=sys.stderr)
        return EXIT_DATA
    if img.ndim == 3 and img.shape[0] == 1:
        img = img[0]
    if args.mask:
        mask = validate_mask(img.astype(np.uint8))
    else:
        mask = extract_metal_mask(img, args.threshold_hu)
    if not mask.any():
        print("no metal found in input", file=sys.stderr)
        return EXIT_DATA

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    implants = connected_components(mask)
    bset = boundary_pixels(implants)
    graph = build_geometric_graph(bset, stride=args.stride)
    density = rasterize_density(graph)
    save_tensor(out / "density.bt", density)
    save_png_gray(out / "density.png", density, (0.0, 1.0))

    hw = (args.feature_size, args.feature_size)
    metal_f = resize_nearest(mask, hw)
    density_f = resize_bilinear(density, hw)
    if metal_f.any():
        polar = compute_polar(metal_f)
        adj = build_artifact_graph(polar, density_f, implants.count,
                                   k_ang=args.k_ang, k_rad=args.k_rad,
                                   sigma=args.sigma)
    else:
        adj = empty_adjacency(hw[0] * hw[1])
    with open(out / "adjacency.json", "w") as f:
        json.dump({"nodes": adj.n, "edges": adj.edge_list()}, f)
    if adj.n <= 4096:
        save_tensor(out / "adjacency.bt", adj.to_dense())
    stats = {
        "implants": implants.count,
        "metal_pixels": int(mask.sum()),
        "boundary_pixels": [int(len(b)) for b in bset.boundaries],
        "geometric_edges": int(graph.edge_count),
        "artifact_nodes": adj.n,
        "artifact_edges": adj.nnz,
        "feature_size": args.feature_size,
    }
    with open(out / "stats.json", "w") as f:
        json.dump(stats, f, indent=1, sort_keys=True)
    print(f"implants={implants.count} edges={graph.edge_count} "
          f"artifact_nnz={adj.nnz} -> {out}")
    return EXIT_OK


def _read_config(path):
    cfg = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgumentError(f"config line not key=value: {raw!r}")
        k, v = line.split("=", 1)
        cfg[k.strip()] = v.strip()
    return cfg


def _train_settings(args):
    """Merge precedence: defaults < config file < explicit CLI flags."""
    merged = {
        "epochs": 30, "batch": 4, "lr": 4e-4, "halve_every": 10, "lam": 0.1,
        "loss": "mse", "scales": "2,4,8", "base_channels": 16, "experts": 3,
        "graphmoe": True, "angular": True, "radial": True, "density_reweight": True,
        "seed": args.seed,
    }
    if args.config:
        conf = _read_config(args.config)
        casts = {"epochs": int, "batch": int, "lr": float, "halve_every": int,
                 "lam": float, "loss": str, "scales": str, "base_channels": int,
                 "experts": int, "seed": int,
                 "graphmoe": lambda v: v.lower() not in ("0", "false", "no"),
                 "angular": lambda v: v.lower() not in ("0", "false", "no"),
                 "radial": lambda v: v.lower() not in ("0", "false", "no"),
                 "density_reweight": lambda v: v.lower() not in ("0", "false", "no")}
        for k, v in conf.items():
            if k not in casts:
                raise InvalidArgumentError(f"unknown config key {k!r}")
            merged[k] = casts[k](v)
    for k in ("epochs", "batch", "lr", "halve_every", "lam", "loss", "scales",
              "base_channels", "experts"):
        v = getattr(args, k)
        if v is not None:
            merged[k] = v
    if args.no_graphmoe:
        merged["graphmoe"] = False
    if args.no_angular:
        merged["angular"] = False
    if args.no_radial:
        merged["radial"] = False
    if args.no_density_reweight:
        merged["density_reweight"] = False
    return merged


def cmd_train(args):
    settings = _train_settings(args)
    scales = tuple(int(s) for s in str(settings["scales"]).split(",") if s)
    moe_cfg = GraphMoeConfig(experts=settings["experts"],
                             enable_angular=settings["angular"],
                             enable_radial=settings["radial"],
                             enable_density_reweight=settings["density_reweight"])
    net_cfg = BackboneConfig(base_channels=settings["base_channels"],
                             graphmoe_scales=scales,
                             enable_graphmoe=settings["graphmoe"],
                             moe=moe_cfg)
    net = RestorationNet(net_cfg, seed=settings["seed"])
    corpus = Corpus(args.data)
    tcfg = TrainConfig(epochs=settings["epochs"], batch=settings["batch"],
                       lr0=settings["lr"], halve_every=settings["halve_every"],
                       lam=settings["lam"], seed=settings["seed"],
                       loss_variant=settings["loss"])
    train(net, corpus, tcfg, args.out,
          log_cb=lambda row: print(
              f"epoch {row['epoch']:3d}  lr {row['lr']:.2e}  l1 {row['l1']:.5f}  "
              f"graph {row['graph']:.5f}  total {row['total']:.5f}"
              + (f"  val {row['val_psnr']:.2f} dB" if "val_psnr" in row else "")))
    print(f"checkpoints written under {args.out}")
    return EXIT_OK


def _net_from_checkpoint(ckpt_dir):
    with open(Path(ckpt_dir) / "manifest.json") as f:
        manifest = json.load(f)
    cfg_d = manifest.get("net_config", {})
    moe_d = cfg_d.get("moe", {})
    cfg = BackboneConfig(
        base_channels=cfg_d.get("base_channels", 16),
        graphmoe_scales=tuple(cfg_d.get("graphmoe_scales", (2, 4, 8))),
        enable_graphmoe=cfg_d.get("enable_graphmoe", True),
        moe=GraphMoeConfig(**moe_d) if moe_d else GraphMoeConfig())
    net = RestorationNet(cfg, seed=cfg_d.get("seed", 0))
    load_checkpoint(net, ckpt_dir)
    return net


def cmd_infer(args):
    corpus = Corpus(args.data)
    net = _net_from_checkpoint(args.checkpoint)
    if args.index < 0 or args.index >= corpus.count(args.split):
        print(f"error: index {args.index} outside split", file=sys.stderr)
        return EXIT_DATA
    sample = corpus.sample(args.split, args.index)
    routing = {}
    if args.routing:
        pred, att, routing = predict(net, corpus, args.split, args.index,
                                     want_routing=True)
    else:
        pred, att = predict(net, corpus, args.split, args.index)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for sc, w in routing.items():
        save_tensor(out / f"routing_s{sc}.bt", w)
        for k in range(w.shape[0]):
            save_png_gray(out / f"routing_s{sc}_k{k}.png", w[k], (0.0, 1.0))
    h, w = sample["x"].shape
    if att is None:
        att = np.zeros((h // 4, w // 4), dtype=np.float32)
    save_tensor(out / "input.bt", sample["x"])
    save_tensor(out / "prediction.bt", pred.astype(np.float32))
    save_tensor(out / "attention.bt", att.astype(np.float32))
    save_png_gray(out / "input.png", sample["x"], WINDOW_FULL)
    save_png_gray(out / "prediction.png", pred, WINDOW_FULL)
    att_norm = minmax_norm(att)
    save_png_gray(out / "attention.png", att_norm, (0.0, 1.0))
    meta = {
        "version": 1,
        "width": int(w), "height": int(h),
        "hu_window": list(WINDOW_FULL),
        "attention_shape": [int(att.shape[0]), int(att.shape[1])],
        "checkpoint": str(args.checkpoint),
        "created": _timestamp(),
        "files": {"input": "input.bt", "prediction": "prediction.bt",
                  "attention": "attention.bt"},
    }
    with open(out / "meta.json", "w") as f:
        json.dump(meta, f, indent=1, sort_keys=True)
    print(f"bundle written to {out}")
    return EXIT_OK


def cmd_fuse(args):
    try:
        x = load_tensor(args.input)
        pred = load_tensor(args.prediction)
        att = load_tensor(args.attention)
    except (OSError, FormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    params = FusionParams(threshold=args.threshold, tau=args.tau)
    att_img = resize_bilinear(minmax_norm(att), x.shape)
    fused = clinical_fuse(x, pred, att_img, params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_tensor(out / "fused.bt", fused)
    save_png_gray(out / "fused.png", fused, WINDOW_FULL)
    print(f"fused output written to {out} (tau={args.tau}, t={args.threshold})")
    return EXIT_OK


def cmd_export_ui(args):
    bundle = Path(args.bundle)
    try:
        with open(bundle / "meta.json") as f:
            meta = json.load(f)
        x = load_tensor(bundle / meta["files"]["input"])
        pred = load_tensor(bundle / meta["files"]["prediction"])
        att = load_tensor(bundle / meta["files"]["attention"])
    except (OSError, KeyError, FormatError, json.JSONDecodeError) as e:
        print(f"error: invalid bundle {bundle}: {e}", file=sys.stderr)
        return EXIT_DATA
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    window = tuple(meta.get("hu_window", WINDOW_FULL))
    save_png_gray(out / "input.png", x, window)
    save_png_gray(out / "output.png", pred, window)
    att_img = resize_bilinear(minmax_norm(att), x.shape)
    save_png_gray(out / "attention.png", att_img, (0.0, 1.0))
    ui_meta = {
        "version": 1,
        "width": int(x.shape[1]), "height": int(x.shape[0]),
        "hu_window": list(window),
        "checkpoint": meta.get("checkpoint", ""),
        "created": _timestamp(),
        "files": {"input": "input.png", "output": "output.png",
                  "attention": "attention.png"},
    }
    with open(out / "meta.json", "w") as f:
        json.dump(ui_meta, f, indent=1, sort_keys=True)
    print(f"viewer payload written to {out}")
    return EXIT_OK


def cmd_selftest(args):
    sigma = args.inject_sigma if args.inject_sigma is not None else 2.0
    ok = run_selftest(angular_sigma=sigma, quick=args.quick)
    return EXIT_OK if ok else EXIT_SELFTEST


def cmd_evaluate(args):
    corpus = Corpus(args.data)
    net = _net_from_checkpoint(args.checkpoint) if args.checkpoint else None
    report = evaluate(net, corpus, args.split)
    print(render_table(report))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w") as f:
            json.dump(report, f, indent=1, sort_keys=True)
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "graph": cmd_graph,
    "train": cmd_train,
    "infer": cmd_infer,
    "fuse": cmd_fuse,
    "export-ui": cmd_export_ui,
    "selftest": cmd_selftest,
    "evaluate": cmd_evaluate,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (InvalidArgumentError, FormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except MetalGraphError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
