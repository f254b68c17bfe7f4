"""Point queries against triangle meshes: closest point, occupancy, signed distance."""
from __future__ import annotations

import numpy as np

from .. import accel
from . import _nb, _np
from .bvh import mesh_bvh
from .mesh import EmptyMeshError, NotWatertightError

RAY_SEED = 0
TIE_TOLERANCE = 1e-12


def ray_direction(seed=RAY_SEED):
    """Fixed, jittered unit direction used for parity tests."""
    rng = np.random.default_rng(seed)
    d = np.array([0.8, 0.45, 0.39]) + 0.1 * rng.standard_normal(3)
    return d / np.linalg.norm(d)


def _as_points(x):
    p = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    return p.reshape(-1, 3), p.ndim == 1


def closest_points(mesh, points):
    """Vectorised closest point: returns (points on surface, distances, face ids).

    Faces whose distance is within ``TIE_TOLERANCE`` x the bbox diagonal of the
    minimum count as tied and the smallest face index wins, so a point over a
    shared edge reports the same face whatever the roundoff of a rigid motion.
    """
    if mesh.is_empty():
        raise EmptyMeshError("closest point on an empty mesh")
    p, _ = _as_points(points)
    b = mesh_bvh(mesh)
    kern = _nb.closest_points if accel.USE_NUMBA else _np.closest_points
    tie = TIE_TOLERANCE * mesh.bbox_diagonal()
    cp, d2, fid = kern(p, b.tris, b.tri_index, b.lo, b.hi, b.left, b.right, b.start, b.count, tie)
    return cp, np.sqrt(d2), fid


def closest_point(mesh, x):
    """Closest surface point to ``x``.  Single point -> (x*, dist); arrays -> arrays."""
    p, single = _as_points(x)
    cp, dist, _ = closest_points(mesh, p)
    if single:
        return cp[0], float(dist[0])
    return cp, dist


def ray_parity(mesh, points, seed=RAY_SEED):
    p, _ = _as_points(points)
    b = mesh_bvh(mesh)
    kern = _nb.ray_hit_counts if accel.USE_NUMBA else _np.ray_hit_counts
    return kern(p, ray_direction(seed), b.tris, b.lo, b.hi, b.left, b.right, b.start, b.count) % 2


def occupancy(mesh, x, seed=RAY_SEED):
    """1 inside / 0 outside by ray parity.  Requires a watertight mesh."""
    if mesh.is_empty():
        raise EmptyMeshError("occupancy of an empty mesh")
    if not mesh.watertight:
        raise NotWatertightError("occupancy needs a watertight mesh")
    p, single = _as_points(x)
    occ = ray_parity(mesh, p, seed).astype(np.uint8)
    return int(occ[0]) if single else occ


def signed_distance(mesh, x, seed=RAY_SEED):
    """Distance to the surface, negative inside."""
    p, single = _as_points(x)
    occ = occupancy(mesh, p, seed)
    _, dist, _ = closest_points(mesh, p)
    d = np.where(occ == 1, -dist, dist)
    return float(d[0]) if single else d
