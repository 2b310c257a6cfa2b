"""Dense tensor containers: binary file format, PNG export, HU ranges.

Tensors are plain float32 numpy arrays of rank 1..4.  The on-disk format
is: 8-byte magic, u8 rank, little-endian u32 dims, row-major float32
payload.  Round-trips are bit-exact.
"""

import struct

import numpy as np
from PIL import Image

from .errors import FormatError, InvalidArgumentError

MAGIC = b"MGTNSR01"
MAX_RANK = 4

HU_MIN = -1024.0
HU_MAX = 4096.0

# evaluation windows, HU
WINDOW_FULL = (-1024.0, 3072.0)
WINDOW_SOFT = (-200.0, 300.0)


def as_tensor(a, rank=None):
    """Validate an array as a tensor: float32, rank 1..4, finite."""
    nd = np.asarray(a).ndim  # before ascontiguousarray promotes 0-d to 1-d
    a = np.ascontiguousarray(a, dtype=np.float32)
    if nd < 1 or nd > MAX_RANK:
        raise InvalidArgumentError(f"tensor rank must be 1..{MAX_RANK}, got {nd}")
    if rank is not None and a.ndim != rank:
        raise InvalidArgumentError(f"expected rank {rank}, got {a.ndim}")
    if not np.all(np.isfinite(a)):
        raise InvalidArgumentError("tensor contains non-finite values")
    return a


def save_tensor(path, a):
    a = as_tensor(a)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<B", a.ndim))
        f.write(struct.pack(f"<{a.ndim}I", *a.shape))
        f.write(a.tobytes(order="C"))


def load_tensor(path):
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < len(MAGIC) + 1 or raw[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: bad magic")
    rank = raw[len(MAGIC)]
    if rank < 1 or rank > MAX_RANK:
        raise FormatError(f"{path}: rank {rank} outside 1..{MAX_RANK}")
    off = len(MAGIC) + 1
    if len(raw) < off + 4 * rank:
        raise FormatError(f"{path}: truncated header")
    shape = struct.unpack(f"<{rank}I", raw[off : off + 4 * rank])
    off += 4 * rank
    n = int(np.prod(shape))
    if len(raw) != off + 4 * n:
        raise FormatError(f"{path}: payload size mismatch "
                          f"(expected {4 * n} bytes, got {len(raw) - off})")
    a = np.frombuffer(raw[off:], dtype="<f4", count=n).reshape(shape)
    return np.ascontiguousarray(a)


def save_png_gray(path, map2d, window):
    """Write a 2D map as 8-bit grayscale PNG, linearly windowed to [lo, hi]."""
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise InvalidArgumentError(f"window lo must be < hi, got {window}")
    a = np.asarray(map2d, dtype=np.float64)
    if a.ndim != 2:
        raise InvalidArgumentError(f"expected 2D map, got rank {a.ndim}")
    scaled = np.clip((a - lo) / (hi - lo) * 255.0, 0.0, 255.0)
    img = np.rint(scaled).astype(np.uint8)
    Image.fromarray(img, mode="L").save(path, format="PNG")


def load_png_gray(path):
    """Read an 8-bit grayscale PNG back as a uint8 array."""
    with Image.open(path) as im:
        if im.mode != "L":
            im = im.convert("L")
        return np.asarray(im, dtype=np.uint8).copy()


def clamp_hu(img):
    """Clamp a 2D HU image to the supported range [-1024, 4096]."""
    return np.clip(np.asarray(img, dtype=np.float32), HU_MIN, HU_MAX)


def load_hu_image(path):
    a = load_tensor(path)
    if a.ndim == 3 and a.shape[0] == 1:
        a = a[0]
    if a.ndim != 2:
        raise FormatError(f"{path}: HU image must be 2D, got shape {a.shape}")
    return clamp_hu(a)


def validate_mask(mask):
    """Check a binary mask holds only {0, 1}; returns it as uint8."""
    m = np.asarray(mask)
    if m.ndim != 2:
        raise InvalidArgumentError(f"mask must be 2D, got rank {m.ndim}")
    u = np.unique(m)
    if not np.all(np.isin(u, (0, 1))):
        raise InvalidArgumentError("mask must contain only 0/1 values")
    return m.astype(np.uint8)
