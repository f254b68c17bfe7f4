"""Software z-buffer rasteriser, visibility test and PFM depth export."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import accel
from . import _nb, _np

EMPTY = -1


@dataclass
class DepthBuffer:
    width: int
    height: int
    depth: np.ndarray      # (H, W) camera-space z, +inf where empty
    entity_id: np.ndarray  # (H, W) int, EMPTY where empty
    face_id: np.ndarray    # (H, W) face index inside its mesh, EMPTY where empty

    @property
    def mask(self):
        return np.isfinite(self.depth)

    def entity_mask(self, entity):
        return self.entity_id == entity


def project_triangles(camera, mesh):
    """(T, 3, 3) array of (u, v, z) per triangle corner."""
    pc = camera.to_camera(mesh.vertices)
    z = pc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = camera.fx * pc[:, 0] / z + camera.cx
        v = camera.fy * pc[:, 1] / z + camera.cy
    uvz = np.stack([u, v, z], 1)
    return np.ascontiguousarray(uvz[mesh.faces])


def rasterize(camera, meshes):
    """Z-buffer ``meshes`` (a list of (TriangleMesh, entity_id)) at pixel centres."""
    H, W = camera.height, camera.width
    depth = np.full((H, W), np.inf)
    ent = np.full((H, W), EMPTY, np.int64)
    face = np.full((H, W), EMPTY, np.int64)
    parts = [(project_triangles(camera, m), np.arange(m.n_faces, dtype=np.int64),
              np.full(m.n_faces, eid, np.int64)) for m, eid in meshes if m.n_faces]
    if parts:
        uvz = np.ascontiguousarray(np.concatenate([p[0] for p in parts]))
        fids = np.concatenate([p[1] for p in parts])
        eids = np.concatenate([p[2] for p in parts])
        kern = _nb.rasterize_into if accel.USE_NUMBA else _np.rasterize_into
        kern(uvz, fids, eids, depth, ent, face, W, H)
    return DepthBuffer(W, H, depth, ent, face)


def vis_tolerance(scene_diagonal):
    """Depth slack for visibility tests: 0.5% of the scene bounding-box diagonal."""
    return 0.005 * float(scene_diagonal)


def visible(points, camera, buffer, eps):
    """1 where the point is not hidden behind the buffer surface, else 0.

    Points projecting outside the raster (or behind the camera) count as hidden.
    """
    p = np.asarray(points, dtype=np.float64)
    single = p.ndim == 1
    p = p.reshape(-1, 3)
    u, v, z = camera.project(p, check=False)
    with np.errstate(invalid="ignore"):
        inside = (z > 0) & (u >= 0) & (u < camera.width) & (v >= 0) & (v < camera.height)
    out = np.zeros(len(p), np.uint8)
    if inside.any():
        x = np.floor(u[inside]).astype(np.int64)
        y = np.floor(v[inside]).astype(np.int64)
        out[inside] = (z[inside] <= buffer.depth[y, x] + eps).astype(np.uint8)
    return int(out[0]) if single else out


# -- PFM ------------------------------------------------------------------------

def write_pfm(path, data):
    """Little-endian float32 PFM.  2-D arrays use the greyscale ``Pf`` header.

    A multi-channel (C, H, W) raster is stored as greyscale with its channel
    planes stacked vertically, i.e. an image of height C * H.
    """
    a = np.asarray(data, dtype=np.float32)
    if a.ndim == 3:
        a = a.reshape(-1, a.shape[-1])
    h, w = a.shape
    with open(path, "wb") as fh:
        fh.write(b"Pf\n%d %d\n-1.0\n" % (w, h))
        fh.write(np.ascontiguousarray(a[::-1]).astype("<f4").tobytes())


def read_pfm(path, channels=None):
    with open(path, "rb") as fh:
        kind = fh.readline().strip()
        if kind not in (b"Pf", b"PF"):
            raise ValueError(f"{path}: not a PFM file")
        w, h = (int(t) for t in fh.readline().split())
        scale = float(fh.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        nc = 3 if kind == b"PF" else 1
        a = np.frombuffer(fh.read(), dtype=dtype, count=w * h * nc)
    a = a.reshape(h, w, nc) if nc == 3 else a.reshape(h, w)
    a = a[::-1].astype(np.float32)
    if channels:
        a = a.reshape(channels, h // channels, w)
    return np.ascontiguousarray(a)


def save_depth_pfm(path, buffer):
    write_pfm(Path(path), buffer.depth)
