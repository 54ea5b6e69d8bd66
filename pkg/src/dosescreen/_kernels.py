"""Numba kernels for the hot loops: histogram builds and tree traversal.

Everything here is serial and uses fixed iteration orders so results are
bit-reproducible run to run. Kernels are cached to disk on first compile.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def build_histogram(binned, rows, feat_ids, g, h, out_g, out_h, out_c):
    """Accumulate per-feature, per-bin gradient/hessian/count sums.

    binned: (n_rows, n_features) uint16 bin ids
    rows: int64 row indices of the node
    feat_ids: int64 global feature ids (one histogram row per entry)
    out_*: (len(feat_ids), max_bins) preallocated zero arrays
    """
    for ii in range(rows.shape[0]):
        r = rows[ii]
        gr = g[r]
        hr = h[r]
        for jj in range(feat_ids.shape[0]):
            b = binned[r, feat_ids[jj]]
            out_g[jj, b] += gr
            out_h[jj, b] += hr
            out_c[jj, b] += 1


@njit(cache=True)
def partition_rows(binned, rows, feat, split_bin):
    """Stable split of rows by bin id: left gets binned[r, feat] <= split_bin."""
    n_left = 0
    for ii in range(rows.shape[0]):
        if binned[rows[ii], feat] <= split_bin:
            n_left += 1
    left = np.empty(n_left, dtype=np.int64)
    right = np.empty(rows.shape[0] - n_left, dtype=np.int64)
    li = 0
    ri = 0
    for ii in range(rows.shape[0]):
        r = rows[ii]
        if binned[r, feat] <= split_bin:
            left[li] = r
            li += 1
        else:
            right[ri] = r
            ri += 1
    return left, right


@njit(cache=True)
def add_tree_margin_binned(binned, feature, split_bin, left, right, value, out):
    """out[r] += leaf value of the tree at row r, routing by bin ids."""
    for r in range(binned.shape[0]):
        i = 0
        while feature[i] >= 0:
            if binned[r, feature[i]] <= split_bin[i]:
                i = left[i]
            else:
                i = right[i]
        out[r] += value[i]


@njit(cache=True)
def sum_tree_margins_dense(block, roots, feature, threshold, left, right, value, out):
    """out[r] = sum over trees of leaf values, routing by float thresholds.

    block: (n_rows, n_features) float64 dense slab
    roots: int64 node offsets of each tree inside the flattened node arrays
    """
    for r in range(block.shape[0]):
        acc = 0.0
        for t in range(roots.shape[0]):
            i = roots[t]
            while feature[i] >= 0:
                if block[r, feature[i]] <= threshold[i]:
                    i = left[i]
                else:
                    i = right[i]
            acc += value[i]
        out[r] = acc
