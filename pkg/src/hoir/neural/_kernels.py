"""Scatter-add used by the bilinear sampling backward pass.

Both versions accumulate in the same (point, corner) order so the results
agree bit for bit.
"""
import numpy as np

from ..accel import optional_njit


@optional_njit
def scatter_rows(out, idx, wts, g):
    n, k = idx.shape
    f = g.shape[1]
    for i in range(n):
        for c in range(k):
            w = wts[i, c]
            if w == 0:
                continue
            r = idx[i, c]
            for j in range(f):
                out[r, j] += w * g[i, j]


def scatter_rows_np(out, idx, wts, g):
    # np.add.at applies updates sequentially in index order, like the loop
    n, k = idx.shape
    contrib = wts[:, :, None] * g[:, None, :]
    keep = (wts != 0).reshape(-1)
    np.add.at(out, idx.reshape(-1)[keep], contrib.reshape(n * k, -1)[keep])
