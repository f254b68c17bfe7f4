"""Marching cubes kernels.

Vertices live on grid edges and are numbered x-edges first, then y, then z,
each block in C order, so neighbouring cells share vertices and the output
is identical between the loop and the vectorised implementation.
"""
import numpy as np

from .accel import optional_njit
from .mc_tables import TRIANGLES

SNAP = 1e-9

TABLE = np.full((256, 16), -1, np.int64)
for _case, _row in enumerate(TRIANGLES):
    TABLE[_case, :len(_row)] = _row
N_TRI = np.array([len(r) // 3 for r in TRIANGLES], np.int64)

# local edge -> (axis, di, dj, dk) of the grid edge it lies on
EDGE_LOC = np.array([
    [0, 0, 0, 0], [1, 1, 0, 0], [0, 0, 1, 0], [1, 0, 0, 0],
    [0, 0, 0, 1], [1, 1, 0, 1], [0, 0, 1, 1], [1, 0, 0, 1],
    [2, 0, 0, 0], [2, 1, 0, 0], [2, 1, 1, 0], [2, 0, 1, 0],
], np.int64)
CORNER_OFF = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
                       [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]], np.int64)


@optional_njit
def _lerp_t(va, vb, iso):
    t = (iso - va) / (vb - va)
    if t < SNAP:
        t = 0.0
    elif t > 1.0 - SNAP:
        t = 1.0
    return t


@optional_njit
def mc_loops(values, iso, table, n_tri, edge_loc, corner_off):
    nx, ny, nz = values.shape
    ex = (nx - 1) * ny * nz
    ey = nx * (ny - 1) * nz
    ez = nx * ny * (nz - 1)
    vid = np.full(ex + ey + ez, -1, np.int64)
    nv = 0
    for i in range(nx - 1):
        for j in range(ny):
            for k in range(nz):
                if (values[i, j, k] < iso) != (values[i + 1, j, k] < iso):
                    vid[(i * ny + j) * nz + k] = nv
                    nv += 1
    for i in range(nx):
        for j in range(ny - 1):
            for k in range(nz):
                if (values[i, j, k] < iso) != (values[i, j + 1, k] < iso):
                    vid[ex + (i * (ny - 1) + j) * nz + k] = nv
                    nv += 1
    for i in range(nx):
        for j in range(ny):
            for k in range(nz - 1):
                if (values[i, j, k] < iso) != (values[i, j, k + 1] < iso):
                    vid[ex + ey + (i * ny + j) * (nz - 1) + k] = nv
                    nv += 1
    verts = np.empty((nv, 3))
    for i in range(nx - 1):
        for j in range(ny):
            for k in range(nz):
                v = vid[(i * ny + j) * nz + k]
                if v >= 0:
                    verts[v, 0] = i + _lerp_t(values[i, j, k], values[i + 1, j, k], iso)
                    verts[v, 1] = j
                    verts[v, 2] = k
    for i in range(nx):
        for j in range(ny - 1):
            for k in range(nz):
                v = vid[ex + (i * (ny - 1) + j) * nz + k]
                if v >= 0:
                    verts[v, 0] = i
                    verts[v, 1] = j + _lerp_t(values[i, j, k], values[i, j + 1, k], iso)
                    verts[v, 2] = k
    for i in range(nx):
        for j in range(ny):
            for k in range(nz - 1):
                v = vid[ex + ey + (i * ny + j) * (nz - 1) + k]
                if v >= 0:
                    verts[v, 0] = i
                    verts[v, 1] = j
                    verts[v, 2] = k + _lerp_t(values[i, j, k], values[i, j, k + 1], iso)

    # count, then fill faces in cell order
    nf = 0
    for i in range(nx - 1):
        for j in range(ny - 1):
            for k in range(nz - 1):
                case = 0
                for c in range(8):
                    if values[i + corner_off[c, 0], j + corner_off[c, 1], k + corner_off[c, 2]] < iso:
                        case |= 1 << c
                nf += n_tri[case]
    faces = np.empty((nf, 3), np.int64)
    f = 0
    for i in range(nx - 1):
        for j in range(ny - 1):
            for k in range(nz - 1):
                case = 0
                for c in range(8):
                    if values[i + corner_off[c, 0], j + corner_off[c, 1], k + corner_off[c, 2]] < iso:
                        case |= 1 << c
                for t in range(n_tri[case]):
                    for q in range(3):
                        e = table[case, 3 * t + q]
                        a = edge_loc[e, 0]
                        ii = i + edge_loc[e, 1]
                        jj = j + edge_loc[e, 2]
                        kk = k + edge_loc[e, 3]
                        if a == 0:
                            g = (ii * ny + jj) * nz + kk
                        elif a == 1:
                            g = ex + (ii * (ny - 1) + jj) * nz + kk
                        else:
                            g = ex + ey + (ii * ny + jj) * (nz - 1) + kk
                        faces[f, q] = vid[g]
                    f += 1
    return verts, faces


def _np_lerp_t(va, vb, iso):
    t = (iso - va) / (vb - va)
    return np.where(t < SNAP, 0.0, np.where(t > 1.0 - SNAP, 1.0, t))


def mc_numpy(values, iso):
    nx, ny, nz = values.shape
    below = values < iso
    cross = [below[:-1] != below[1:], below[:, :-1] != below[:, 1:], below[:, :, :-1] != below[:, :, 1:]]
    counts = [int(c.sum()) for c in cross]
    offs = np.cumsum([0] + counts)
    ids = []
    verts = []
    for a, c in enumerate(cross):
        m = np.full(c.shape, -1, np.int64)
        m[c] = offs[a] + np.arange(counts[a])
        ids.append(m)
        idx = np.argwhere(c)
        i, j, k = idx[:, 0], idx[:, 1], idx[:, 2]
        step = [0, 0, 0]
        step[a] = 1
        va = values[i, j, k]
        vb = values[i + step[0], j + step[1], k + step[2]]
        p = idx.astype(np.float64)
        p[:, a] = idx[:, a] + _np_lerp_t(va, vb, iso)
        verts.append(p)
    verts = np.concatenate(verts) if verts else np.zeros((0, 3))

    case = np.zeros((nx - 1, ny - 1, nz - 1), np.int64)
    for c, (di, dj, dk) in enumerate(CORNER_OFF):
        case |= below[di:nx - 1 + di, dj:ny - 1 + dj, dk:nz - 1 + dk].astype(np.int64) << c
    cells = np.argwhere(N_TRI[case] > 0)
    cc = case[cells[:, 0], cells[:, 1], cells[:, 2]]
    rows = TABLE[cc][:, :15].reshape(len(cc), 5, 3)
    valid = rows[:, :, 0] >= 0
    cell_of = np.repeat(np.arange(len(cc)), 5).reshape(len(cc), 5)[valid]
    e = rows[valid]                                     # (F, 3) local edges
    base = cells[cell_of]                               # (F, 3) cell index
    loc = EDGE_LOC[e]                                   # (F, 3, 4)
    ii = base[:, None, 0] + loc[..., 1]
    jj = base[:, None, 1] + loc[..., 2]
    kk = base[:, None, 2] + loc[..., 3]
    faces = np.empty(e.shape, np.int64)
    for a in range(3):
        m = loc[..., 0] == a
        faces[m] = ids[a][ii[m], jj[m], kk[m]]
    return verts, faces
