"""Sparse polar-coordinate artifact graph at feature scale.

Each feature node gets polar coordinates (radius, angle) relative to its
nearest metal pixel.  Edges connect nodes with similar angle (same streak
direction) or similar radius (same distance from metal), Gaussian
weighted; edges are optionally reweighted by the geometric density map,
then symmetrized and degree-normalized.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import EmptyMetalError, InvalidArgumentError, StateError
from .resample import resize_bilinear, resize_nearest
from .tensorio import validate_mask

DEFAULT_K_ANGULAR = 12
DEFAULT_K_RADIAL = 4
DEFAULT_SIGMA = 2.0


@dataclass
class PolarField:
    """Per-node radius (feature-grid pixels) and angle in (-pi, pi]."""

    radius: np.ndarray    # float32 (h, w)
    theta: np.ndarray     # float32 (h, w)

    @property
    def shape(self):
        return self.radius.shape


def compute_polar(metal_f):
    """Exact nearest set bit per node (Euclidean, ties by smallest
    row-major index); theta = 0 where radius = 0."""
    m = validate_mask(metal_f)
    pts = np.argwhere(m > 0).astype(np.int64)  # row-major order
    if len(pts) == 0:
        raise EmptyMetalError("metal mask has no set bits")
    h, w = m.shape
    dr, dc = kernels.nearest_offsets(np.ascontiguousarray(pts), h, w)
    dr64 = dr.astype(np.float64)
    dc64 = dc.astype(np.float64)
    radius = np.sqrt(dr64 * dr64 + dc64 * dc64)
    theta = np.arctan2(dc64, dr64)
    theta[radius == 0] = 0.0
    return PolarField(radius=radius.astype(np.float32), theta=theta.astype(np.float32))


def angular_weight(theta_i, theta_j, sigma=DEFAULT_SIGMA):
    """Gaussian of the circular angle distance, in (0, 1]."""
    d = abs(float(theta_i) - float(theta_j))
    d = min(d, 2.0 * np.pi - d)
    return float(np.exp(-(d * d) / (2.0 * sigma * sigma)))


def radial_weight(r_i, r_j, sigma=DEFAULT_SIGMA):
    """Gaussian of the radius difference, in (0, 1]."""
    d = float(r_i) - float(r_j)
    return float(np.exp(-(d * d) / (2.0 * sigma * sigma)))


@dataclass
class SparseAdjacency:
    """Symmetric normalized weighted graph over h*w feature-grid nodes."""

    n: int
    src: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    dst: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    weight: np.ndarray = field(default_factory=lambda: np.empty(0, np.float32))
    degree: np.ndarray = None
    finalized: bool = False

    @property
    def nnz(self):
        return len(self.src)

    def to_dense(self):
        a = np.zeros((self.n, self.n), dtype=np.float32)
        a[self.src, self.dst] = self.weight
        return a

    def matmul(self, x):
        """A @ x for dense (n, c) node features."""
        if not self.finalized:
            raise StateError("adjacency must be finalized before matmul")
        x = np.ascontiguousarray(x)
        if x.shape[0] != self.n:
            raise InvalidArgumentError(f"expected {self.n} rows, got {x.shape[0]}")
        if self.nnz == 0:
            return np.zeros_like(x)
        return kernels.spmm(self.src, self.dst, self.weight.astype(np.float64), x)

    def edge_list(self):
        return [(int(i), int(j), float(w))
                for i, j, w in zip(self.src, self.dst, self.weight)]


def _combine_duplicates(src, dst, wgt, n):
    """Sum weights of repeated (src, dst) pairs; output sorted by (src, dst)."""
    if len(src) == 0:
        return src, dst, wgt
    key = src * n + dst
    uniq, inv = np.unique(key, return_inverse=True)
    summed = np.bincount(inv, weights=wgt, minlength=len(uniq))
    return (uniq // n).astype(np.int64), (uniq % n).astype(np.int64), summed


def build_artifact_graph(polar, density_f, n_implants, k_ang=DEFAULT_K_ANGULAR,
                         k_rad=DEFAULT_K_RADIAL, sigma=DEFAULT_SIGMA,
                         reweight_by_density=True):
    """Top-k angular + radial edges, density reweighting for multi-implant
    masks, symmetrization, and symmetric degree normalization."""
    h, w = polar.shape
    density_f = np.asarray(density_f, dtype=np.float32)
    if density_f.shape != (h, w):
        raise InvalidArgumentError(
            f"density map {density_f.shape} does not match polar grid {(h, w)}")
    if k_ang < 0 or k_rad < 0:
        raise InvalidArgumentError("k_ang and k_rad must be >= 0")
    n = h * w
    if max(k_ang, k_rad) > n - 1:
        warnings.warn(f"top-k of {max(k_ang, k_rad)} exceeds n-1={n - 1}; clamping")
        k_ang = min(k_ang, n - 1)
        k_rad = min(k_rad, n - 1)

    theta = np.ascontiguousarray(polar.theta.reshape(-1).astype(np.float64))
    rad = np.ascontiguousarray(polar.radius.reshape(-1).astype(np.float64))
    src, dst, wgt = kernels.topk_edges(theta, rad, k_ang, k_rad, sigma)
    src, dst, wgt = _combine_duplicates(src, dst, wgt, n)

    if reweight_by_density and n_implants >= 2 and len(src):
        g = density_f.reshape(-1).astype(np.float64)
        wgt = wgt * np.sqrt(g[src] * g[dst])

    # A <- A + A^T, then drop exact zeros (density can null out edges)
    src, dst, wgt = _combine_duplicates(
        np.concatenate([src, dst]), np.concatenate([dst, src]),
        np.concatenate([wgt, wgt]), n)
    keep = wgt > 0
    src, dst, wgt = src[keep], dst[keep], wgt[keep]

    degree = np.bincount(src, weights=wgt, minlength=n)
    safe = np.where(degree > 0, degree, 1.0)
    norm = wgt / np.sqrt(safe[src] * safe[dst])
    return SparseAdjacency(n=n, src=src, dst=dst,
                           weight=norm.astype(np.float32),
                           degree=degree.astype(np.float32), finalized=True)


def empty_adjacency(n):
    return SparseAdjacency(n=n, degree=np.zeros(n, np.float32), finalized=True)


@dataclass
class GraphContext:
    """Everything GraphMoE needs for one sample at one feature scale."""

    metal_f: np.ndarray      # uint8 (h, w)
    density_f: np.ndarray    # float32 (h, w)
    polar: PolarField        # radius/theta; zeros when no metal survives
    adjacency: SparseAdjacency
    n_implants: int

    @property
    def shape(self):
        return self.density_f.shape


def build_graph_context(mask, density, n_implants, feature_hw,
                        k_ang=DEFAULT_K_ANGULAR, k_rad=DEFAULT_K_RADIAL,
                        sigma=DEFAULT_SIGMA, reweight_by_density=True):
    """Resize mask/density to feature scale and construct the artifact
    graph.  A mask that loses all metal at feature scale yields an empty
    adjacency and an all-zero polar field; the module still runs."""
    hf, wf = int(feature_hw[0]), int(feature_hw[1])
    metal_f = resize_nearest(validate_mask(mask), (hf, wf))
    density_f = resize_bilinear(np.asarray(density, np.float32), (hf, wf))
    if metal_f.any():
        polar = compute_polar(metal_f)
        adj = build_artifact_graph(polar, density_f, n_implants, k_ang=k_ang,
                                   k_rad=k_rad, sigma=sigma,
                                   reweight_by_density=reweight_by_density)
    else:
        zeros = np.zeros((hf, wf), dtype=np.float32)
        polar = PolarField(radius=zeros, theta=zeros.copy())
        adj = empty_adjacency(hf * wf)
    return GraphContext(metal_f=metal_f, density_f=density_f, polar=polar,
                        adjacency=adj, n_implants=n_implants)
