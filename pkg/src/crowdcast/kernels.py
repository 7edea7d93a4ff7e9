"""Kernel selection: compiled extension when importable, numpy otherwise.

Set ``CROWDCAST_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _hist_py

BACKEND = "python"
_impl = _hist_py.build_histogram

if os.environ.get("CROWDCAST_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _hist  # type: ignore[attr-defined]
    except ImportError:
        pass
    else:
        _impl = _hist.build_histogram
        BACKEND = "cython"


def build_histogram(bins, node_of_row, feat_idx, values, offsets, total_bins, backend=None):
    """Accumulate ``values`` into ``hist[node, position, channel]``.

    Feature ``j`` owns positions ``offsets[j] .. offsets[j] + n_bins[j] - 1``;
    row ``i`` adds to ``offsets[j] + bins[i, j]`` for every feature ``j`` in
    its node's row of ``feat_idx``, and once to the node total at position
    ``total_bins``. Rows with a negative node are skipped. Integer
    accumulation keeps the result independent of row order.
    """
    bins = np.ascontiguousarray(bins, dtype=np.uint8)
    node_of_row = np.ascontiguousarray(node_of_row, dtype=np.int32)
    feat_idx = np.ascontiguousarray(feat_idx, dtype=np.int32)
    values = np.ascontiguousarray(values, dtype=np.int64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    if backend == "python":
        fn = _hist_py.build_histogram
    elif backend == "cython":
        if BACKEND != "cython":
            raise RuntimeError("compiled kernel is not available")
        fn = _impl
    else:
        fn = _impl
    return fn(bins, node_of_row, feat_idx, values, offsets, int(total_bins))
