"""Indexed triangle meshes, a few watertight primitives and OBJ I/O."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    pass


class EmptyMeshError(MeshError):
    pass


class NotWatertightError(MeshError):
    pass


def edge_counts(faces):
    """Return (unique undirected edges, how many faces use each)."""
    faces = np.asarray(faces, dtype=np.int64)
    if len(faces) == 0:
        return np.zeros((0, 2), np.int64), np.zeros(0, np.int64)
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e.sort(axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    return uniq, counts


def is_closed(faces):
    if len(faces) == 0:
        return False
    _, counts = edge_counts(faces)
    return bool(np.all(counts == 2))


@dataclass(eq=False)
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray
    vertex_normals: np.ndarray | None = None
    watertight: bool = False
    _bvh: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3))
        self.faces = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int64).reshape(-1, 3))
        if self.vertex_normals is not None:
            self.vertex_normals = np.asarray(self.vertex_normals, dtype=np.float64).reshape(-1, 3)
            if len(self.vertex_normals) != len(self.vertices):
                raise MeshError("vertex_normals must match vertex count")
        if len(self.faces):
            if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
                raise MeshError("face index out of range")
            f = self.faces
            if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
                raise MeshError("face with repeated vertex index")
        if self.watertight and not is_closed(self.faces):
            raise NotWatertightError("mesh flagged watertight has boundary or non-manifold edges")

    # -- derived quantities -------------------------------------------------
    @property
    def triangles(self):
        return self.vertices[self.faces]

    @property
    def n_faces(self):
        return len(self.faces)

    def is_empty(self):
        return len(self.faces) == 0

    def face_areas(self):
        t = self.triangles
        return 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)

    def area(self):
        return float(self.face_areas().sum())

    def face_normals(self):
        t = self.triangles
        n = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        return n / np.where(norm > 0, norm, 1.0)

    def compute_vertex_normals(self):
        t = self.triangles
        n = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])  # area weighted
        vn = np.zeros_like(self.vertices)
        for k in range(3):
            np.add.at(vn, self.faces[:, k], n)
        norm = np.linalg.norm(vn, axis=1, keepdims=True)
        return vn / np.where(norm > 0, norm, 1.0)

    def volume(self):
        t = self.triangles
        return float(np.einsum("ij,ij->i", t[:, 0], np.cross(t[:, 1], t[:, 2])).sum() / 6.0)

    def bounds(self):
        if len(self.vertices) == 0:
            raise EmptyMeshError("empty mesh has no bounds")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def bbox_diagonal(self):
        lo, hi = self.bounds()
        return float(np.linalg.norm(hi - lo))

    def centroid(self):
        """Vertex centroid (plain average of vertex positions)."""
        return self.vertices.mean(axis=0)

    def check_watertight(self):
        return is_closed(self.faces)

    # -- transforms -----------------------------------------------------------
    def transformed(self, rotation=None, translation=None, scale=1.0):
        """Return ``scale * R @ v + t`` applied to every vertex."""
        v = self.vertices * scale
        vn = self.vertex_normals
        if rotation is not None:
            rotation = np.asarray(rotation, dtype=np.float64)
            v = v @ rotation.T
            if vn is not None:
                vn = vn @ rotation.T
        if translation is not None:
            v = v + np.asarray(translation, dtype=np.float64)
        return TriangleMesh(v, self.faces.copy(), vn, self.watertight)

    def translated(self, t):
        return self.transformed(translation=t)

    def flipped(self):
        vn = None if self.vertex_normals is None else -self.vertex_normals
        return TriangleMesh(self.vertices.copy(), self.faces[:, ::-1].copy(), vn, self.watertight)

    def copy(self):
        vn = None if self.vertex_normals is None else self.vertex_normals.copy()
        return TriangleMesh(self.vertices.copy(), self.faces.copy(), vn, self.watertight)


def concatenate(meshes):
    """Stack several meshes into one; watertight iff every part is."""
    meshes = [m for m in meshes if m is not None]
    if not meshes:
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), np.int64))
    verts, faces, off = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + off)
        off += len(m.vertices)
    wt = all(m.watertight for m in meshes) and sum(m.n_faces for m in meshes) > 0
    return TriangleMesh(np.concatenate(verts), np.concatenate(faces), None, wt)


def weld(vertices, faces, decimals=12):
    """Merge coincident vertices and drop faces that collapse."""
    key = np.round(np.asarray(vertices), decimals)
    uniq, inverse = np.unique(key, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    # keep first occurrence position (not the rounded key)
    first = np.full(len(uniq), -1, np.int64)
    order = np.arange(len(vertices))[::-1]
    first[inverse[order]] = order
    new_v = np.asarray(vertices)[first]
    f = inverse[np.asarray(faces)]
    ok = (f[:, 0] != f[:, 1]) & (f[:, 1] != f[:, 2]) & (f[:, 0] != f[:, 2])
    return new_v, f[ok]


# -- primitives ----------------------------------------------------------------

def icosphere(subdivisions=4, radius=1.0, center=(0.0, 0.0, 0.0)):
    t = (1.0 + 5 ** 0.5) / 2.0
    v = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=np.float64)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    for _ in range(subdivisions):
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e_sorted = np.sort(e, axis=1)
        uniq, inv = np.unique(e_sorted, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        mid = v[uniq[:, 0]] + v[uniq[:, 1]]
        mid /= np.linalg.norm(mid, axis=1, keepdims=True)
        base = len(v)
        v = np.concatenate([v, mid])
        n = len(f)
        a, b, c = f[:, 0], f[:, 1], f[:, 2]
        ab, bc, ca = base + inv[:n], base + inv[n:2 * n], base + inv[2 * n:]
        f = np.concatenate([
            np.stack([a, ab, ca], 1), np.stack([b, bc, ab], 1),
            np.stack([c, ca, bc], 1), np.stack([ab, bc, ca], 1),
        ])
    v = v * radius + np.asarray(center, dtype=np.float64)
    return TriangleMesh(v, f, watertight=True)


def box(size=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0)):
    """Axis-aligned box with outward-facing triangles."""
    hx, hy, hz = (np.asarray(size, dtype=np.float64) / 2.0)
    v = np.array([
        [-hx, -hy, -hz], [hx, -hy, -hz], [hx, hy, -hz], [-hx, hy, -hz],
        [-hx, -hy, hz], [hx, -hy, hz], [hx, hy, hz], [-hx, hy, hz],
    ]) + np.asarray(center, dtype=np.float64)
    f = np.array([
        [0, 2, 1], [0, 3, 2],  # -z
        [4, 5, 6], [4, 6, 7],  # +z
        [0, 1, 5], [0, 5, 4],  # -y
        [3, 7, 6], [3, 6, 2],  # +y
        [0, 4, 7], [0, 7, 3],  # -x
        [1, 2, 6], [1, 6, 5],  # +x
    ], dtype=np.int64)
    return TriangleMesh(v, f, watertight=True)


def cylinder(radius=0.5, height=1.0, segments=32, center=(0.0, 0.0, 0.0)):
    """Closed cylinder along +y."""
    ang = 2 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), np.zeros(segments), -radius * np.sin(ang)], 1)
    lo = ring + [0, -height / 2, 0]
    hi = ring + [0, height / 2, 0]
    v = np.concatenate([lo, hi, [[0, -height / 2, 0], [0, height / 2, 0]]])
    cb, ct = 2 * segments, 2 * segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces += [[i, j, segments + j], [i, segments + j, segments + i]]
        faces += [[cb, j, i], [ct, segments + i, segments + j]]
    v = v + np.asarray(center, dtype=np.float64)
    return TriangleMesh(v, np.array(faces), watertight=True)


def grid_solid(occ, origin=(0.0, 0.0, 0.0), spacing=1.0):
    """Boundary surface of a union of voxels (``occ[i, j, k]`` true = filled).

    Produces an exactly closed, outward oriented mesh for any voxel set whose
    cells share faces only (edge/vertex-only contacts make non-manifold edges).
    """
    occ = np.asarray(occ, dtype=bool)
    nx, ny, nz = occ.shape
    pad = np.zeros((nx + 2, ny + 2, nz + 2), bool)
    pad[1:-1, 1:-1, 1:-1] = occ
    quads = []
    # corner offsets of a unit face, counter-clockwise seen from outside (+axis)
    for axis in range(3):
        for sign in (1, -1):
            shift = [0, 0, 0]
            shift[axis] = sign
            nb = np.roll(pad, -sign, axis=axis)
            face = pad & ~nb
            idx = np.argwhere(face[1:-1, 1:-1, 1:-1])
            if len(idx) == 0:
                continue
            a1, a2 = (axis + 1) % 3, (axis + 2) % 3
            base = idx.astype(np.float64)
            base[:, axis] += 1.0 if sign > 0 else 0.0
            c = np.zeros((len(idx), 4, 3))
            for q, (da, db) in enumerate([(0, 0), (1, 0), (1, 1), (0, 1)]):
                c[:, q] = base
                c[:, q, a1] += da
                c[:, q, a2] += db
            if sign < 0:
                c = c[:, ::-1]
            quads.append(c)
    quads = np.concatenate(quads)
    verts = quads.reshape(-1, 3)
    n = len(quads)
    f = np.arange(4 * n).reshape(n, 4)
    faces = np.concatenate([f[:, [0, 1, 2]], f[:, [0, 2, 3]]])
    v, faces = weld(verts, faces, decimals=6)
    v = v * spacing + np.asarray(origin, dtype=np.float64)
    return TriangleMesh(v, faces, watertight=True)


def l_shape(size=1.0):
    """Non-convex L-shaped prism made of three unit-ish voxels."""
    occ = np.zeros((2, 2, 1), bool)
    occ[0, 0, 0] = occ[1, 0, 0] = occ[0, 1, 0] = True
    return grid_solid(occ, origin=(-size, -size, -size / 2), spacing=size)


# -- OBJ I/O ---------------------------------------------------------------------

def save_obj(mesh, path):
    path = Path(path)
    lines = []
    for v in mesh.vertices:
        lines.append("v %.17g %.17g %.17g" % tuple(v))
    if mesh.vertex_normals is not None:
        for n in mesh.vertex_normals:
            lines.append("vn %.17g %.17g %.17g" % tuple(n))
        for f in mesh.faces + 1:
            lines.append("f %d//%d %d//%d %d//%d" % (f[0], f[0], f[1], f[1], f[2], f[2]))
    else:
        for f in mesh.faces + 1:
            lines.append("f %d %d %d" % tuple(f))
    path.write_text("\n".join(lines) + "\n")


def load_obj(path, watertight=None):
    """Read the v/vn/f subset of OBJ (triangles only, 1-based indices).

    ``watertight=None`` infers the flag from the edge structure.
    """
    verts, norms, faces = [], [], []
    for raw in Path(path).read_text().splitlines():
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        tag = parts[0]
        if tag == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif tag == "vn":
            norms.append([float(x) for x in parts[1:4]])
        elif tag == "f":
            idx = [int(p.split("/")[0]) for p in parts[1:]]
            if len(idx) != 3:
                raise MeshError(f"only triangles supported, got {len(idx)}-gon")
            faces.append([i - 1 if i > 0 else len(verts) + i for i in idx])
    vn = np.array(norms) if norms and len(norms) == len(verts) else None
    f = np.array(faces, dtype=np.int64).reshape(-1, 3)
    if watertight is None:
        watertight = is_closed(f)
    return TriangleMesh(np.array(verts, dtype=np.float64).reshape(-1, 3), f, vn, watertight)
