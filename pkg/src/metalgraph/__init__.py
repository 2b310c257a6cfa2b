"""Geometry-aware graph learning for CT metal artifact reduction.

The package covers the full desk-scale pipeline: a parallel-beam CT
simulator that produces paired corrupted/clean phantoms, construction of
geometric and polar-coordinate artifact graphs from metal masks, a
graph-routed mixture-of-experts module inside a tiny trainable
encoder-decoder, image-quality metrics, and a clinician-steerable fusion
post-processor.

Hot numeric kernels are JIT-compiled with numba by default; set
``METALGRAPH_BACKEND=numpy`` to force the pure-numpy fallback path.
"""

from .errors import (
    MetalGraphError,
    InvalidArgumentError,
    FormatError,
    EmptyMetalError,
    StateError,
    DataError,
)

__version__ = "0.1.0"

__all__ = [
    "MetalGraphError",
    "InvalidArgumentError",
    "FormatError",
    "EmptyMetalError",
    "StateError",
    "DataError",
    "__version__",
]
