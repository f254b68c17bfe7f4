"""Bounding volume hierarchy over triangles.

The tree is stored as flat arrays so the numba kernels and the numpy fallback
traverse exactly the same structure.  Leaves reference a contiguous range of
the permuted triangle array.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import accel
from ..accel import optional_njit

LEAF_SIZE = 4


@dataclass
class BVH:
    tris: np.ndarray       # (T, 3, 3) triangles in tree order
    tri_index: np.ndarray  # (T,) original face index of each tree-order triangle
    lo: np.ndarray         # (N, 3) node box min
    hi: np.ndarray         # (N, 3) node box max
    left: np.ndarray       # (N,) child index or -1 for leaves
    right: np.ndarray
    start: np.ndarray      # (N,) leaf triangle range
    count: np.ndarray

    @property
    def n_nodes(self):
        return len(self.lo)


@optional_njit
def _build_loops(tmin, tmax, cent, leaf_size):
    T = cent.shape[0]
    order = np.arange(T)
    max_nodes = 2 * T + 1
    lo = np.empty((max_nodes, 3))
    hi = np.empty((max_nodes, 3))
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)
    start = np.zeros(max_nodes, np.int64)
    count = np.zeros(max_nodes, np.int64)
    stack = np.empty((max_nodes, 3), np.int64)
    sp = 0
    stack[sp, 0] = 0
    stack[sp, 1] = 0
    stack[sp, 2] = T
    sp += 1
    n_nodes = 1
    while sp > 0:
        sp -= 1
        node = stack[sp, 0]
        s = stack[sp, 1]
        e = stack[sp, 2]
        cmin = np.full(3, np.inf)
        cmax = np.full(3, -np.inf)
        for a in range(3):
            lo[node, a] = np.inf
            hi[node, a] = -np.inf
        for i in range(s, e):
            t = order[i]
            for a in range(3):
                if tmin[t, a] < lo[node, a]:
                    lo[node, a] = tmin[t, a]
                if tmax[t, a] > hi[node, a]:
                    hi[node, a] = tmax[t, a]
                if cent[t, a] < cmin[a]:
                    cmin[a] = cent[t, a]
                if cent[t, a] > cmax[a]:
                    cmax[a] = cent[t, a]
        axis = 0
        ext = cmax[0] - cmin[0]
        for a in range(1, 3):
            if cmax[a] - cmin[a] > ext:
                ext = cmax[a] - cmin[a]
                axis = a
        if e - s <= leaf_size or ext <= 0.0:
            start[node] = s
            count[node] = e - s
            continue
        keys = np.empty(e - s)
        for i in range(s, e):
            keys[i - s] = cent[order[i], axis]
        perm = np.argsort(keys, kind="mergesort")
        seg = order[s:e].copy()
        for i in range(e - s):
            order[s + i] = seg[perm[i]]
        mid = (s + e) // 2
        l_id = n_nodes
        r_id = n_nodes + 1
        n_nodes += 2
        left[node] = l_id
        right[node] = r_id
        stack[sp, 0] = r_id
        stack[sp, 1] = mid
        stack[sp, 2] = e
        sp += 1
        stack[sp, 0] = l_id
        stack[sp, 1] = s
        stack[sp, 2] = mid
        sp += 1
    return order, lo[:n_nodes], hi[:n_nodes], left[:n_nodes], right[:n_nodes], start[:n_nodes], count[:n_nodes]


def _build_numpy(tmin, tmax, cent, leaf_size):
    T = len(cent)
    order = np.arange(T)
    lo, hi, left, right, start, count = [], [], [], [], [], []

    def new_node():
        lo.append(None); hi.append(None)
        left.append(-1); right.append(-1); start.append(0); count.append(0)
        return len(lo) - 1

    new_node()
    stack = [(0, 0, T)]
    while stack:
        node, s, e = stack.pop()
        idx = order[s:e]
        lo[node] = tmin[idx].min(axis=0)
        hi[node] = tmax[idx].max(axis=0)
        c = cent[idx]
        extent = c.max(axis=0) - c.min(axis=0)
        axis = int(np.argmax(extent))  # first max, same tie rule as the loop version
        if e - s <= leaf_size or extent[axis] <= 0.0:
            start[node], count[node] = s, e - s
            continue
        perm = np.argsort(c[:, axis], kind="mergesort")
        order[s:e] = idx[perm]
        mid = (s + e) // 2
        l_id = new_node()
        r_id = new_node()
        left[node], right[node] = l_id, r_id
        stack.append((r_id, mid, e))
        stack.append((l_id, s, mid))
    return (order, np.array(lo), np.array(hi), np.array(left, np.int64), np.array(right, np.int64),
            np.array(start, np.int64), np.array(count, np.int64))


def build_bvh(triangles, leaf_size=LEAF_SIZE):
    """Median-split BVH over an (T, 3, 3) triangle array."""
    tris = np.ascontiguousarray(triangles, dtype=np.float64)
    if len(tris) == 0:
        raise ValueError("cannot build BVH over zero triangles")
    tmin = tris.min(axis=1)
    tmax = tris.max(axis=1)
    cent = tris.mean(axis=1)
    builder = _build_loops if accel.USE_NUMBA else _build_numpy
    order, lo, hi, left, right, start, count = builder(tmin, tmax, cent, leaf_size)
    return BVH(np.ascontiguousarray(tris[order]), order.astype(np.int64), lo, hi, left, right, start, count)


def mesh_bvh(mesh):
    """Cached BVH for an immutable mesh."""
    if mesh._bvh is None:
        mesh._bvh = build_bvh(mesh.triangles)
    return mesh._bvh
