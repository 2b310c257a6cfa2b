"""Training and evaluation loops over a simulated corpus."""

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .backbone import net_config_dict, save_checkpoint
from .errors import DataError, InvalidArgumentError
from .geometry import connected_components, density_from_mask
from .losses import DEFAULT_LAMBDA, geometric_alignment_loss, total_loss
from .metrics import windowed_metrics
from .moe import make_context
from .nn import Adam
from .resample import resize_bilinear
from .tensorio import load_tensor, save_tensor

HU_OFFSET = 1024.0
HU_SCALE = 4096.0


def hu_to_unit(img):
    return ((np.asarray(img, np.float32) + HU_OFFSET) / HU_SCALE).astype(np.float32)


def unit_to_hu(img):
    return np.asarray(img, np.float32) * HU_SCALE - HU_OFFSET


@dataclass
class TrainConfig:
    epochs: int = 30
    batch: int = 4
    lr0: float = 4e-4
    halve_every: int = 10
    lam: float = DEFAULT_LAMBDA
    seed: int = 0
    loss_variant: str = "mse"

    def __post_init__(self):
        if self.batch < 2:
            raise InvalidArgumentError("batch must be >= 2 (batch-norm constraint)")
        if self.loss_variant not in ("mse", "kl"):
            raise InvalidArgumentError(f"unknown loss variant {self.loss_variant!r}")


def lr_schedule(lr0, halve_every, epoch):
    return lr0 * 2.0 ** (-(epoch // halve_every))


class Corpus:
    """Lazy reader over a simulated dataset directory with per-sample
    caches for masks, density maps, and graph contexts."""

    def __init__(self, root):
        self.root = Path(root)
        with open(self.root / "manifest.json") as f:
            self.manifest = json.load(f)
        self.size = int(self.manifest["size"])
        self._cache = {}
        self._ctx_cache = {}

    def count(self, split):
        return int(self.manifest["splits"][split])

    def sample(self, split, i):
        key = (split, i)
        if key not in self._cache:
            d = self.root / split
            x = load_tensor(d / f"x_{i:05d}.bt")
            y = load_tensor(d / f"y_{i:05d}.bt")
            m = load_tensor(d / f"m_{i:05d}.bt").astype(np.uint8)
            n_implants = connected_components(m).count
            density, _, _ = density_from_mask(m)
            self._cache[key] = {"x": x, "y": y, "m": m,
                                "n_implants": n_implants, "density": density}
        return self._cache[key]

    def context(self, split, i, scale, moe_cfg):
        key = (split, i, scale, moe_cfg.effective_k(), moe_cfg.sigma,
               moe_cfg.enable_density_reweight)
        if key not in self._ctx_cache:
            s = self.sample(split, i)
            hw = (self.size // scale, self.size // scale)
            self._ctx_cache[key] = make_context(s["m"], s["density"],
                                                s["n_implants"], hw, moe_cfg)
        return self._ctx_cache[key]


def _batch_inputs(corpus, split, idxs, net):
    samples = [corpus.sample(split, i) for i in idxs]
    x = np.stack([hu_to_unit(s["x"]) for s in samples])[:, None]
    y = np.stack([hu_to_unit(s["y"]) for s in samples])[:, None]
    contexts = None
    if net.moe:
        contexts = {s: [corpus.context(split, i, s, net.cfg.moe) for i in idxs]
                    for s in net.moe}
    return x, y, samples, contexts


def _graph_loss(outputs, samples, variant):
    """Mean per-sample alignment loss; single-implant samples contribute 0."""
    if outputs.attention is None:
        return None
    bsz = outputs.attention.value.shape[0]
    th, tw = outputs.attention.value.shape[2:]
    terms = []
    for b, s in enumerate(samples):
        if s["n_implants"] <= 1:
            continue
        target = resize_bilinear(s["density"], (th, tw))
        ga = ad.narrow(outputs.attention, 0, b, 1)
        terms.append(geometric_alignment_loss(ga, target.reshape(1, 1, th, tw),
                                              s["n_implants"], variant))
    if not terms:
        return None
    acc = terms[0]
    for t in terms[1:]:
        acc = ad.add(acc, t)
    return ad.div(acc, float(bsz))


def train(net, corpus, cfg, out_dir, log_cb=None, val_samples=12):
    """Deterministic training loop; returns the per-epoch log rows.

    Writes train_log.csv plus 'last' and 'best' checkpoints under out_dir.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    opt = Adam(net.params(), cfg.lr0)
    n = corpus.count("train")
    rows = []
    best_psnr = -np.inf
    n_val = min(val_samples, corpus.count("test"))
    for epoch in range(cfg.epochs):
        lr = lr_schedule(cfg.lr0, cfg.halve_every, epoch)
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence([cfg.seed & 0xFFFFFFFF, 7 + epoch])))
        order = rng.permutation(n)
        sums = np.zeros(3)
        steps = 0
        for start in range(0, n - cfg.batch + 1, cfg.batch):
            idxs = order[start : start + cfg.batch]
            x, y, samples, contexts = _batch_inputs(corpus, "train", idxs, net)
            outputs = net.forward(x, contexts, train=True)
            gl = _graph_loss(outputs, samples, cfg.loss_variant)
            loss, report = total_loss(outputs.prediction, y, gl, cfg.lam)
            if not np.isfinite(report.total):
                dump = out / f"nan_batch_e{epoch}"
                dump.mkdir(exist_ok=True)
                save_tensor(dump / "x.bt", x.reshape(-1, *x.shape[2:]))
                save_tensor(dump / "y.bt", y.reshape(-1, *y.shape[2:]))
                raise DataError(f"non-finite loss at epoch {epoch}; "
                                f"offending batch dumped to {dump}")
            loss.backward()
            opt.step(lr)
            sums += (report.l1, report.graph, report.total)
            steps += 1
        row = {"epoch": epoch, "lr": lr,
               "l1": sums[0] / steps, "graph": sums[1] / steps,
               "total": sums[2] / steps}
        if n_val > 0:
            row["val_psnr"] = _quick_psnr(net, corpus, n_val)
            if row["val_psnr"] > best_psnr:
                best_psnr = row["val_psnr"]
                save_checkpoint(net, out / "best", step=epoch,
                                extra={"val_psnr": best_psnr,
                                       "net_config": net_config_dict(net)})
        rows.append(row)
        if log_cb:
            log_cb(row)
    save_checkpoint(net, out / "last", step=cfg.epochs,
                    extra={"net_config": net_config_dict(net)})
    with open(out / "train_log.csv", "w", newline="") as f:
        fields = list(rows[0].keys()) if rows else ["epoch"]
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    return rows


def predict(net, corpus, split, i, want_routing=False):
    """Eval-mode forward for one sample; returns (pred_hu, attention or None)
    or, with ``want_routing``, (pred_hu, attention, {scale: K x h x w})."""
    s = corpus.sample(split, i)
    x = hu_to_unit(s["x"])[None, None]
    contexts = None
    if net.moe:
        contexts = {sc: [corpus.context(split, i, sc, net.cfg.moe)]
                    for sc in net.moe}
    outputs = net.forward(x, contexts, train=False)
    pred = unit_to_hu(outputs.prediction.value[0, 0])
    att = outputs.attention.value[0, 0] if outputs.attention is not None else None
    if want_routing:
        routing = {sc: w.value[0] for sc, w in outputs.routing.items()}
        return pred, att, routing
    return pred, att


def _quick_psnr(net, corpus, n_val):
    vals = []
    for i in range(n_val):
        s = corpus.sample("test", i)
        pred, _ = predict(net, corpus, "test", i)
        vals.append(windowed_metrics(pred, s["y"])["mean"]["psnr"])
    return float(np.mean(vals))


def evaluate(net, corpus, split="test"):
    """Windowed PSNR/SSIM per sample, grouped by implant count and by
    metal-area quintile.  ``net=None`` scores the identity mapping
    (prediction = input), the metal-affected baseline row."""
    n = corpus.count(split)
    if n == 0:
        raise InvalidArgumentError(f"split {split!r} is empty")
    per = []
    for i in range(n):
        s = corpus.sample(split, i)
        pred = s["x"] if net is None else predict(net, corpus, split, i)[0]
        wm = windowed_metrics(pred, s["y"])
        per.append({
            "index": i,
            "n_implants": s["n_implants"],
            "metal_px": int(s["m"].sum()),
            "psnr": wm["mean"]["psnr"], "ssim": wm["mean"]["ssim"],
            "psnr_full": wm["full"]["psnr"], "ssim_full": wm["full"]["ssim"],
            "psnr_soft": wm["soft"]["psnr"], "ssim_soft": wm["soft"]["ssim"],
        })

    def agg(items):
        return {"n": len(items),
                "psnr": float(np.mean([p["psnr"] for p in items])),
                "ssim": float(np.mean([p["ssim"] for p in items]))}

    by_count = {}
    for c in sorted({p["n_implants"] for p in per}):
        by_count[str(c)] = agg([p for p in per if p["n_implants"] == c])

    areas = np.array([p["metal_px"] for p in per], dtype=np.float64)
    qs = np.quantile(areas, [0.2, 0.4, 0.6, 0.8])
    group_of = np.searchsorted(qs, areas, side="left")
    quintiles = []
    for q in range(5):
        members = [per[i] for i in range(n) if group_of[i] == q]
        entry = agg(members) if members else {"n": 0, "psnr": None, "ssim": None}
        entry["quintile"] = q + 1
        quintiles.append(entry)

    return {"samples": per, "by_implant_count": by_count,
            "by_area_quintile": quintiles, "average": agg(per)}


def render_table(report):
    lines = ["group               n   PSNR(dB)   SSIM"]
    for q in report["by_area_quintile"]:
        p = "-" if q["psnr"] is None else f"{q['psnr']:8.2f}"
        s = "-" if q["ssim"] is None else f"{q['ssim']:.4f}"
        lines.append(f"area quintile {q['quintile']}   {q['n']:3d}   {p}   {s}")
    for c, a in report["by_implant_count"].items():
        lines.append(f"implants = {c}       {a['n']:3d}   {a['psnr']:8.2f}   {a['ssim']:.4f}")
    a = report["average"]
    lines.append(f"average            {a['n']:3d}   {a['psnr']:8.2f}   {a['ssim']:.4f}")
    return "\n".join(lines)
