#!/usr/bin/env python3
"""Build the viewer test fixtures from the real pipeline:

simulate -> train (1 epoch) -> infer -> export-ui, then freeze the
expected fused bytes for a 5x5 (threshold, tau) grid computed with the
primary package's clinical_fuse on the decoded 8-bit intensities.

Run from the repo root:  python3 frontend/tools/make_fixtures.py
"""

import json
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from metalgraph.cli import main as cli
from metalgraph.losses import FusionParams, clinical_fuse
from metalgraph.tensorio import load_png_gray

GRID = [0.0, 0.25, 0.5, 0.75, 1.0]


def run(argv):
    rc = cli(argv)
    if rc != 0:
        sys.exit(f"command {argv} failed with {rc}")


def main():
    out_dir = Path(__file__).resolve().parent.parent / "test" / "fixtures"
    out_dir.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as td:
        tmp = Path(td)
        run(["simulate", "--out", str(tmp / "corpus"), "--n-train", "6",
             "--n-test", "2", "--implants", "2:3", "--size", "32", "--seed", "13"])
        run(["train", "--data", str(tmp / "corpus"), "--out", str(tmp / "run"),
             "--epochs", "2", "--batch", "2", "--base-channels", "8",
             "--seed", "13"])
        run(["infer", "--checkpoint", str(tmp / "run" / "last"),
             "--data", str(tmp / "corpus"), "--split", "test", "--index", "0",
             "--out", str(tmp / "bundle")])
        run(["export-ui", "--bundle", str(tmp / "bundle"),
             "--out", str(tmp / "ui")])
        for name in ("input.png", "output.png", "attention.png", "meta.json"):
            shutil.copy(tmp / "ui" / name, out_dir / name)

    x = load_png_gray(out_dir / "input.png").astype(np.float64) / 255.0
    y = load_png_gray(out_dir / "output.png").astype(np.float64) / 255.0
    att = load_png_gray(out_dir / "attention.png").astype(np.float64) / 255.0
    expected = {"grid": GRID, "width": x.shape[1], "height": x.shape[0],
                "fused": {}}
    for t in GRID:
        for tau in GRID:
            fused = clinical_fuse(x, y, att, FusionParams(threshold=t, tau=tau))
            key = f"t{t:.2f}_tau{tau:.2f}"
            expected["fused"][key] = np.rint(
                np.clip(fused, 0, 1) * 255).astype(int).ravel().tolist()
    with open(out_dir / "expected.json", "w") as f:
        json.dump(expected, f)
    print(f"fixtures written to {out_dir}")


if __name__ == "__main__":
    main()
