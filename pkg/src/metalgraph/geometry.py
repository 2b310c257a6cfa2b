"""Image-scale geometric graph construction from a metal mask.

Pipeline: threshold HU image -> connected components (one per implant)
-> boundary pixels -> all inter-implant boundary pairs -> per-pixel line
traversal counts, min-max normalized to a density map in [0, 1].
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import InvalidArgumentError
from .tensorio import validate_mask

METAL_THRESHOLD_HU = 2800.0


@dataclass
class ImplantSet:
    """Disjoint pixel sets (row, col int arrays), one per implant."""

    components: list = field(default_factory=list)
    shape: tuple = (0, 0)

    @property
    def count(self):
        return len(self.components)


@dataclass
class BoundarySet:
    """Per-implant boundary pixels, row-major order within each implant."""

    boundaries: list = field(default_factory=list)
    shape: tuple = (0, 0)

    @property
    def count(self):
        return len(self.boundaries)


@dataclass
class GeometricGraph:
    """All cross-implant boundary-pixel pairs as integer segments."""

    nodes: np.ndarray          # (n, 2) all boundary pixels
    edges: np.ndarray          # (e, 4) rows (r0, c0, r1, c1)
    shape: tuple

    @property
    def edge_count(self):
        return self.edges.shape[0]


def extract_metal_mask(img, threshold_hu=METAL_THRESHOLD_HU):
    """Binary metal mask: bit set iff pixel HU >= threshold."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise InvalidArgumentError(f"expected 2D image, got rank {img.ndim}")
    return (img >= threshold_hu).astype(np.uint8)


_NEIGH8 = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def connected_components(mask):
    """8-connectivity labeling; components ordered by their smallest
    row-major pixel index."""
    m = validate_mask(mask)
    h, w = m.shape
    labels = np.full((h, w), -1, dtype=np.int32)
    comps = []
    for r in range(h):
        for c in range(w):
            if m[r, c] == 0 or labels[r, c] >= 0:
                continue
            lab = len(comps)
            stack = [(r, c)]
            labels[r, c] = lab
            pixels = []
            while stack:
                pr, pc = stack.pop()
                pixels.append((pr, pc))
                for dr, dc in _NEIGH8:
                    nr, nc = pr + dr, pc + dc
                    if 0 <= nr < h and 0 <= nc < w and m[nr, nc] and labels[nr, nc] < 0:
                        labels[nr, nc] = lab
                        stack.append((nr, nc))
            px = np.array(sorted(pixels), dtype=np.int64)
            comps.append(px)
    return ImplantSet(components=comps, shape=(h, w))


def boundary_pixels(implants):
    """Per implant, keep pixels with >= 1 non-metal 4-neighbour
    (the image border counts as non-metal)."""
    h, w = implants.shape
    mask = np.zeros((h, w), dtype=bool)
    for px in implants.components:
        mask[px[:, 0], px[:, 1]] = True
    bounds = []
    for px in implants.components:
        r, c = px[:, 0], px[:, 1]
        on_border = (r == 0) | (r == h - 1) | (c == 0) | (c == w - 1)
        keep = on_border.copy()
        inner = ~on_border
        if inner.any():
            ri, ci = r[inner], c[inner]
            open4 = (~mask[ri - 1, ci] | ~mask[ri + 1, ci]
                     | ~mask[ri, ci - 1] | ~mask[ri, ci + 1])
            keep[inner] = open4
        bounds.append(px[keep])
    return BoundarySet(boundaries=bounds, shape=(h, w))


def build_geometric_graph(bset, stride=1):
    """All cross-implant pairs over every stride-th boundary pixel."""
    if stride < 1:
        raise InvalidArgumentError(f"stride must be >= 1, got {stride}")
    picked = [b[::stride] for b in bset.boundaries]
    nodes = (np.concatenate(picked, axis=0) if picked
             else np.empty((0, 2), dtype=np.int64))
    edges = []
    n = len(picked)
    for i in range(n):
        for j in range(i + 1, n):
            a, b = picked[i], picked[j]
            if len(a) == 0 or len(b) == 0:
                continue
            ii = np.repeat(np.arange(len(a)), len(b))
            jj = np.tile(np.arange(len(b)), len(a))
            edges.append(np.hstack([a[ii], b[jj]]))
    e = (np.concatenate(edges, axis=0) if edges
         else np.empty((0, 4), dtype=np.int64))
    return GeometricGraph(nodes=nodes, edges=e.astype(np.int64), shape=bset.shape)


def rasterize_density(graph, h=None, w=None):
    """Bresenham-trace every edge, +1 per traversed pixel (endpoints
    included), then min-max normalize.  No edges -> all-zero map."""
    if h is None or w is None:
        h, w = graph.shape
    if graph.edge_count == 0:
        return np.zeros((h, w), dtype=np.float32)
    if graph.edges[:, (0, 2)].max() >= h or graph.edges[:, (1, 3)].max() >= w:
        raise InvalidArgumentError("edge coordinates outside target raster")
    acc = kernels.accumulate_lines(np.ascontiguousarray(graph.edges), h, w)
    lo, hi = int(acc.min()), int(acc.max())
    if hi == lo:
        if hi == 0:
            return np.zeros((h, w), dtype=np.float32)
        return np.ones((h, w), dtype=np.float32)
    return ((acc - lo) / float(hi - lo)).astype(np.float32)


def density_from_mask(mask, stride=1):
    """Convenience: mask -> (density map, implant count, boundary set)."""
    implants = connected_components(mask)
    bset = boundary_pixels(implants)
    graph = build_geometric_graph(bset, stride=stride)
    return rasterize_density(graph), implants.count, bset
