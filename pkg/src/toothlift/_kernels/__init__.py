"""Kernel backend selection.

The hot loops (triangle rasterization, Dinic max-flow) exist twice: a
Cython extension (``_core``) and a pure-Python/numpy mirror
(``pykernels``). The compiled one is preferred when it imported cleanly;
``TOOTHLIFT_KERNELS=python|compiled`` overrides the choice. Both produce
bit-identical results (see tests/test_kernels.py), so the switch only
affects speed.
"""

import os

import numpy as np

from . import pykernels

try:
    from . import _core
except ImportError:
    _core = None

HAVE_COMPILED = _core is not None

FACE_EMPTY = pykernels.FACE_EMPTY


def _select():
    choice = os.environ.get("TOOTHLIFT_KERNELS", "auto")
    if choice == "python":
        return pykernels, "python"
    if choice == "compiled":
        if not HAVE_COMPILED:
            raise ImportError(
                "TOOTHLIFT_KERNELS=compiled but the extension is not built; "
                "run pip install -e . with a C compiler available")
        return _core, "compiled"
    if choice != "auto":
        raise ValueError(f"unknown TOOTHLIFT_KERNELS value: {choice!r}")
    return (_core, "compiled") if HAVE_COMPILED else (pykernels, "python")


_impl, BACKEND = _select()


def backends():
    """Name -> module for every available backend (for parity tests/bench)."""
    out = {"python": pykernels}
    if HAVE_COMPILED:
        out["compiled"] = _core
    return out


def rasterize(pts, faces, width, height, impl=None):
    """Rasterize screen-space triangles; see pykernels.rasterize."""
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    faces = np.ascontiguousarray(faces, dtype=np.int64)
    return (impl or _impl).rasterize(pts, faces, width, height)


def build_csr(n, tails, heads, caps):
    """Interleave forward/reverse arcs and index them CSR-style by tail.

    Arc 2i is tails[i]->heads[i] with caps[i]; arc 2i+1 is the zero-capacity
    reverse (residual pairing: reverse of e is e^1). Arcs of a node are
    visited in insertion order.
    """
    tails = np.asarray(tails, dtype=np.int64)
    heads = np.asarray(heads, dtype=np.int64)
    caps = np.asarray(caps, dtype=np.int64)
    m = len(tails)
    to = np.empty(2 * m, dtype=np.int64)
    cap = np.empty(2 * m, dtype=np.int64)
    to[0::2] = heads
    to[1::2] = tails
    cap[0::2] = caps
    cap[1::2] = 0
    arc_tail = np.empty(2 * m, dtype=np.int64)
    arc_tail[0::2] = tails
    arc_tail[1::2] = heads
    csr = np.argsort(arc_tail, kind="stable").astype(np.int64)
    start = np.searchsorted(arc_tail[csr], np.arange(n + 1)).astype(np.int64)
    return to, cap, csr, start


def max_flow(n, source, sink, tails, heads, caps, impl=None):
    """Exact integer max-flow; returns (flow, source_side bool array)."""
    to, cap, csr, start = build_csr(n, tails, heads, caps)
    return (impl or _impl).max_flow(n, source, sink, to, cap, csr, start)
