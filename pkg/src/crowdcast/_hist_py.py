"""Numpy implementation of the histogram kernel (fallback and reference)."""
import numpy as np

# bincount accumulates in float64; inputs are integer-valued and callers keep
# every total below 2**53, so the sums are exact.
_CHUNK_ELEMS = 1 << 22


def build_histogram(bins, node_of_row, feat_idx, values, offsets, total_bins):
    n_nodes, m = feat_idx.shape
    n_ch = values.shape[1]
    width = total_bins + 1
    size = n_nodes * width
    acc = np.zeros((n_ch, size), dtype=np.float64)
    rows = np.flatnonzero(node_of_row >= 0)
    step = max(1, _CHUNK_ELEMS // (m + 1))
    for s in range(0, len(rows), step):
        r = rows[s:s + step]
        nd = node_of_row[r].astype(np.int64)
        fi = feat_idx[nd]
        pos = offsets[fi] + bins[r[:, None], fi]
        # last column is the node total slot
        flat = np.column_stack([pos, np.full(len(r), total_bins)]) + (nd * width)[:, None]
        flat = flat.ravel()
        for c in range(n_ch):
            w = np.repeat(values[r, c].astype(np.float64), m + 1)
            acc[c] += np.bincount(flat, weights=w, minlength=size)
    out = np.rint(acc).astype(np.int64)
    return np.ascontiguousarray(out.T.reshape(n_nodes, width, n_ch))
