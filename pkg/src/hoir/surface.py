"""Occupancy grids and iso-surface extraction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import accel
from ._mc import CORNER_OFF, EDGE_LOC, N_TRI, TABLE, mc_loops, mc_numpy
from .geometry.mesh import TriangleMesh, is_closed

ISO_LEVEL = 0.5


@dataclass
class ScalarGrid:
    values: np.ndarray          # (nx, ny, nz)
    origin: np.ndarray
    spacing: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        if self.values.ndim != 3 or min(self.values.shape) < 2:
            raise ValueError("grid needs at least 2 nodes per axis")
        if not self.spacing > 0:
            raise ValueError("grid spacing must be positive")

    @property
    def resolution(self):
        return self.values.shape

    def node_positions(self):
        nx, ny, nz = self.values.shape
        idx = np.stack(np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij"), -1)
        return self.origin + idx.reshape(-1, 3) * self.spacing

    @classmethod
    def over_box(cls, lo, hi, resolution, margin=0.05):
        """Cubic-cell grid covering [lo, hi] grown by ``margin`` of its extent.

        ``resolution`` is the node count along the longest axis.
        """
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        ext = hi - lo
        lo = lo - margin * ext
        hi = hi + margin * ext
        spacing = float((hi - lo).max() / (resolution - 1))
        counts = np.maximum(np.ceil((hi - lo) / spacing - 1e-9).astype(int) + 1, 2)
        center = (lo + hi) / 2
        origin = center - (counts - 1) * spacing / 2
        return cls(np.zeros(tuple(counts)), origin, spacing)


def _weld_exact(verts, faces):
    """Merge bit-identical vertices (from snapped edge crossings) keeping first-seen order."""
    if len(verts) == 0:
        return verts, faces
    _, first, inverse = np.unique(verts, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    if len(first) == len(verts):
        return verts, faces
    # renumber in order of first appearance so output order stays deterministic
    rank = np.empty(len(first), np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(first))
    new_verts = verts[np.sort(first)]
    f = rank[inverse][faces]
    ok = (f[:, 0] != f[:, 1]) & (f[:, 1] != f[:, 2]) & (f[:, 0] != f[:, 2])
    return new_verts, f[ok]


def marching_cubes(grid, iso=ISO_LEVEL):
    """Triangulate the ``iso`` level set of ``grid``.

    Faces are wound so normals point towards lower values (outward for an
    occupancy field).  Returns an empty mesh when ``iso`` is outside the
    open range (min, max) of the grid.
    """
    v = np.ascontiguousarray(grid.values, dtype=np.float64)
    if not (v.min() < iso < v.max()):
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), np.int64))
    if accel.USE_NUMBA:
        verts, faces = mc_loops(v, float(iso), TABLE, N_TRI, EDGE_LOC, CORNER_OFF)
    else:
        verts, faces = mc_numpy(v, float(iso))
    verts, faces = _weld_exact(verts, faces)
    # the table winds triangles with normals towards the below-iso corners
    verts = grid.origin + verts * grid.spacing
    return TriangleMesh(verts, faces, watertight=is_closed(faces))


def closed_field(grid):
    """Copy of ``grid`` with its outer shell of nodes forced to empty, so the
    extracted surface is closed even when occupancy reaches the box faces."""
    v = grid.values.copy()
    v[[0, -1]] = 0.0
    v[:, [0, -1]] = 0.0
    v[:, :, [0, -1]] = 0.0
    return ScalarGrid(v, grid.origin, grid.spacing)


def reconstruction_grid(ctx, resolution=128, margin=0.05):
    """Grid over the body proxy + object box, in body-centred coordinates."""
    lo_h, hi_h = ctx.scene.body_proxy.bounds()
    lo_o, hi_o = ctx.scene.object_mesh.bounds()
    c = ctx.frame.center
    return ScalarGrid.over_box(np.minimum(lo_h, lo_o) - c, np.maximum(hi_h, hi_o) - c, resolution, margin)


def grid_inputs(ctx, grid, chunk=32768):
    """Network point inputs for every node of ``grid``, in chunks.  They
    depend only on the view, so several models can share them."""
    from .pipeline.data import point_inputs

    nodes = grid.node_positions() + ctx.frame.center
    return [point_inputs(ctx, nodes[s:s + chunk]) for s in range(0, len(nodes), chunk)]


def evaluate_field(model, ctx, grid, entity="joint", chunk=32768, inputs=None):
    """Occupancy of every grid node for ``entity`` ("human", "object" or
    "joint" = pointwise max of the two; union architectures always answer
    with their single joint head).  ``inputs`` may carry the output of
    :func:`grid_inputs`."""
    from .neural.tensor import no_grad

    inputs = inputs if inputs is not None else grid_inputs(ctx, grid, chunk)
    size = ctx.images["I_f"].shape[1:]
    union = model.cfg.ablation.union
    queries = {"human": "h", "object": "o"}
    out = []
    with no_grad():
        feats = model.encode(model.stack_inputs([ctx.images]))
        for pts in inputs:
            if union or entity != "joint":
                val = model.predict(feats, 0, pts, queries.get(entity, "h"), size).data
            else:
                val = np.maximum(model.predict(feats, 0, pts, "h", size).data,
                                 model.predict(feats, 0, pts, "o", size).data)
            out.append(val)
    return ScalarGrid(np.concatenate(out).reshape(grid.values.shape), grid.origin, grid.spacing)


def extract(grid, center):
    """Closed iso-surface of an occupancy grid, shifted back to scene coordinates."""
    m = marching_cubes(closed_field(grid), ISO_LEVEL)
    return m.translated(center) if not m.is_empty() else m


def reconstruct(model, ctx, resolution=128, grid=None, inputs=None):
    """(human, object, joint) meshes in scene coordinates.  Union
    architectures have no per-entity field, so all three are the joint mesh."""
    grid = grid or reconstruction_grid(ctx, resolution)
    inputs = inputs if inputs is not None else grid_inputs(ctx, grid)
    c = ctx.frame.center
    if model.cfg.ablation.union:
        j = extract(evaluate_field(model, ctx, grid, "joint", inputs=inputs), c)
        return j, j, j
    fh = evaluate_field(model, ctx, grid, "human", inputs=inputs)
    fo = evaluate_field(model, ctx, grid, "object", inputs=inputs)
    fj = ScalarGrid(np.maximum(fh.values, fo.values), grid.origin, grid.spacing)
    return extract(fh, c), extract(fo, c), extract(fj, c)
