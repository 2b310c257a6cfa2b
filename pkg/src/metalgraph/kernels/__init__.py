"""Backend dispatch for the hot kernels.

``METALGRAPH_BACKEND`` selects the implementation:

* ``auto`` (default): numba JIT for the loop-bound kernels (line
  rasterization, nearest-metal search, top-k edge selection, projection /
  backprojection, sparse matmul); the BLAS-backed numpy path for the
  convolutions, where measured throughput is 3-10x higher than the JIT
  loops (see benchmarks/bench_kernels.py)
* ``numba``: everything JIT-compiled, including the convolutions
* ``numpy``: pure-numpy fallback for everything

Both backends expose the same functions with matching semantics;
integer-structured outputs (rasterized lines, nearest indices, top-k
selections) agree bit-exactly across backends.
"""

import os

from . import _numpy_impl

_choice = os.environ.get("METALGRAPH_BACKEND", "auto").lower()

if _choice not in ("auto", "numba", "numpy"):
    raise RuntimeError(f"METALGRAPH_BACKEND must be auto|numba|numpy, got {_choice!r}")

if _choice == "numpy":
    _loops = _numpy_impl
    _conv = _numpy_impl
elif _choice == "numba":
    from . import _numba_impl
    _loops = _numba_impl
    _conv = _numba_impl
else:
    try:
        from . import _numba_impl
        _loops = _numba_impl
    except ImportError:
        _loops = _numpy_impl
    _conv = _numpy_impl

BACKEND = _loops.BACKEND_NAME

accumulate_lines = _loops.accumulate_lines
nearest_offsets = _loops.nearest_offsets
topk_edges = _loops.topk_edges
spmm = _loops.spmm
radon_fwd = _loops.radon_fwd
backproject = _loops.backproject
conv2d_fwd = _conv.conv2d_fwd
conv2d_bwd_w = _conv.conv2d_bwd_w
conv2d_bwd_x = _conv.conv2d_bwd_x


def using_numba():
    return BACKEND == "numba"
