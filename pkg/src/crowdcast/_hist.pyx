# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled histogram accumulation for binned tree training."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def build_histogram(const unsigned char[:, :] bins,
                    const int[:] node_of_row,
                    const int[:, :] feat_idx,
                    const long long[:, :] values,
                    const long long[:] offsets,
                    int total_bins):
    cdef Py_ssize_t n = bins.shape[0]
    cdef Py_ssize_t n_nodes = feat_idx.shape[0]
    cdef Py_ssize_t m = feat_idx.shape[1]
    cdef Py_ssize_t n_ch = values.shape[1]
    out = np.zeros((n_nodes, total_bins + 1, n_ch), dtype=np.int64)
    cdef long long[:, :, :] hist = out
    cdef Py_ssize_t i, k, c, p
    cdef int node, j
    with nogil:
        for i in range(n):
            node = node_of_row[i]
            if node < 0:
                continue
            for c in range(n_ch):
                hist[node, total_bins, c] += values[i, c]
            for k in range(m):
                j = feat_idx[node, k]
                p = offsets[j] + bins[i, j]
                for c in range(n_ch):
                    hist[node, p, c] += values[i, c]
    return out
