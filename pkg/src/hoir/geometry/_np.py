"""Vectorised numpy twins of the loop kernels in ``_nb``.

BVH traversal is done breadth-first over (query, node) pairs, so the work per
level is a handful of array operations instead of a Python loop per query.
Arithmetic is written in the same order as the loop kernels so both backends
agree bit for bit on the same triangle.
"""
import numpy as np
from scipy.spatial import cKDTree


def _dot(a, b):
    return a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1] + a[:, 2] * b[:, 2]


def closest_on_triangles(p, a, b, c):
    ab, ac, ap = b - a, c - a, p - a
    d1, d2 = _dot(ab, ap), _dot(ac, ap)
    bp = p - b
    d3, d4 = _dot(ab, bp), _dot(ac, bp)
    cp = p - c
    d5, d6 = _dot(ab, cp), _dot(ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = 1.0 / (va + vb + vc)
        v_in = vb * denom
        w_in = vc * denom
        out = np.stack([a[:, k] + ab[:, k] * v_in + ac[:, k] * w_in for k in range(3)], 1)

        m_a = (d1 <= 0.0) & (d2 <= 0.0)
        m_b = (d3 >= 0.0) & (d4 <= d3)
        m_ab = (vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0)
        m_c = (d6 >= 0.0) & (d5 <= d6)
        m_ac = (vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0)
        m_bc = (va <= 0.0) & ((d4 - d3) >= 0.0) & ((d5 - d6) >= 0.0)

        v_ab = d1 / (d1 - d3)
        w_ac = d2 / (d2 - d6)
        w_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        cb = c - b
        cand = [
            (m_bc, np.stack([b[:, k] + w_bc * cb[:, k] for k in range(3)], 1)),
            (m_ac, np.stack([a[:, k] + w_ac * ac[:, k] for k in range(3)], 1)),
            (m_c, c),
            (m_ab, np.stack([a[:, k] + v_ab * ab[:, k] for k in range(3)], 1)),
            (m_b, b),
            (m_a, a),
        ]
    # later entries win, matching the early-return order of the loop kernel
    for m, val in cand:
        out = np.where(m[:, None], val, out)
    return out


def _box_d2(p, lo, hi):
    d = np.zeros(len(p))
    for k in range(3):
        below = lo[:, k] - p[:, k]
        above = p[:, k] - hi[:, k]
        t = np.where(p[:, k] < lo[:, k], below, np.where(p[:, k] > hi[:, k], above, 0.0))
        d = d + t * t
    return d


def _expand_leaves(q, nodes, start, count):
    cnt = count[nodes]
    rq = np.repeat(q, cnt)
    first = np.repeat(start[nodes], cnt)
    offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    return rq, first + offs


def closest_points(points, tris, tri_index, lo, hi, left, right, start, count, tie, chunk=4096):
    flat = tris.reshape(-1, 3)
    tree = cKDTree(flat)
    parts = [_closest_chunk(points[s:s + chunk], tree, flat, tris, tri_index, lo, hi, left, right, start, count,
                            tie)
             for s in range(0, len(points), chunk)]
    if not parts:
        return np.zeros((0, 3)), np.zeros(0), np.zeros(0, np.int64)
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(3))


def _closest_chunk(points, tree, flat, tris, tri_index, lo, hi, left, right, start, count, tie):
    n = len(points)
    # nearest vertex distance is an exact upper bound, which keeps the pair set small
    _, vi = tree.query(points)
    best_pt = flat[vi].copy()
    diff = points - best_pt
    best = _dot(diff, diff)
    best_f = np.full(n, np.iinfo(np.int64).max, np.int64)

    q = np.arange(n)
    nodes = np.zeros(n, np.int64)
    while len(q):
        keep = _box_d2(points[q], lo[nodes], hi[nodes]) <= best[q]
        q, nodes = q[keep], nodes[keep]
        leaf = left[nodes] < 0
        if leaf.any():
            rq, rt = _expand_leaves(q[leaf], nodes[leaf], start, count)
            t = tris[rt]
            cp = closest_on_triangles(points[rq], t[:, 0], t[:, 1], t[:, 2])
            dv = points[rq] - cp
            d2 = _dot(dv, dv)
            fid = tri_index[rt]
            order = np.lexsort((fid, d2, rq))
            rq, d2, fid, cp = rq[order], d2[order], fid[order], cp[order]
            first = np.ones(len(rq), bool)
            first[1:] = rq[1:] != rq[:-1]
            rq, d2, fid, cp = rq[first], d2[first], fid[first], cp[first]
            better = (d2 < best[rq]) | ((d2 == best[rq]) & (fid < best_f[rq]))
            u = rq[better]
            best[u] = d2[better]
            best_f[u] = fid[better]
            best_pt[u] = cp[better]
        inner = ~leaf
        iq, inn = q[inner], nodes[inner]
        q = np.concatenate([iq, iq])
        nodes = np.concatenate([left[inn], right[inn]])
    if tie > 0.0:
        s = np.sqrt(best) + tie
        return _smallest_near_face(points, s * s, tris, tri_index, lo, hi, left, right, start, count)
    return best_pt, best, best_f


def _smallest_near_face(points, limit, tris, tri_index, lo, hi, left, right, start, count):
    """Smallest face index among faces within squared distance ``limit``."""
    n = len(points)
    best_pt = np.zeros((n, 3))
    best = np.full(n, np.inf)
    best_f = np.full(n, np.iinfo(np.int64).max, np.int64)
    q = np.arange(n)
    nodes = np.zeros(n, np.int64)
    while len(q):
        keep = _box_d2(points[q], lo[nodes], hi[nodes]) <= limit[q]
        q, nodes = q[keep], nodes[keep]
        leaf = left[nodes] < 0
        if leaf.any():
            rq, rt = _expand_leaves(q[leaf], nodes[leaf], start, count)
            t = tris[rt]
            cp = closest_on_triangles(points[rq], t[:, 0], t[:, 1], t[:, 2])
            dv = points[rq] - cp
            d2 = _dot(dv, dv)
            fid = tri_index[rt]
            near = d2 <= limit[rq]
            rq, d2, fid, cp = rq[near], d2[near], fid[near], cp[near]
            order = np.lexsort((fid, rq))
            rq, d2, fid, cp = rq[order], d2[order], fid[order], cp[order]
            first = np.ones(len(rq), bool)
            first[1:] = rq[1:] != rq[:-1]
            rq, d2, fid, cp = rq[first], d2[first], fid[first], cp[first]
            better = fid < best_f[rq]
            u = rq[better]
            best[u] = d2[better]
            best_f[u] = fid[better]
            best_pt[u] = cp[better]
        inner = ~leaf
        iq, inn = q[inner], nodes[inner]
        q = np.concatenate([iq, iq])
        nodes = np.concatenate([left[inn], right[inn]])
    return best_pt, best, best_f


def ray_hit_counts(points, direction, tris, lo, hi, left, right, start, count, chunk=16384):
    if len(points) > chunk:
        return np.concatenate([ray_hit_counts(points[s:s + chunk], direction, tris, lo, hi, left, right,
                                              start, count, chunk) for s in range(0, len(points), chunk)])
    d = np.asarray(direction, dtype=np.float64)
    kz = int(np.argmax(np.abs(d)))
    kx = (kz + 1) % 3
    ky = (kx + 1) % 3
    if d[kz] < 0.0:
        kx, ky = ky, kx
    sx, sy, sz = d[kx] / d[kz], d[ky] / d[kz], 1.0 / d[kz]
    with np.errstate(divide="ignore"):
        inv = np.where(d != 0.0, 1.0 / np.where(d != 0.0, d, 1.0), np.inf)
    n = len(points)
    hits = np.zeros(n, np.int64)
    q = np.arange(n)
    nodes = np.zeros(n, np.int64)
    while len(q):
        o = points[q]
        tmin = np.zeros(len(q))
        tmax = np.full(len(q), np.inf)
        for k in range(3):
            t1 = (lo[nodes, k] - o[:, k]) * inv[k]
            t2 = (hi[nodes, k] - o[:, k]) * inv[k]
            tmin = np.maximum(tmin, np.minimum(t1, t2))
            tmax = np.minimum(tmax, np.maximum(t1, t2))
        keep = tmin <= tmax
        q, nodes = q[keep], nodes[keep]
        leaf = left[nodes] < 0
        if leaf.any():
            rq, rt = _expand_leaves(q[leaf], nodes[leaf], start, count)
            t = tris[rt]
            o = points[rq]
            A = t[:, 0] - o
            B = t[:, 1] - o
            C = t[:, 2] - o
            ax = A[:, kx] - sx * A[:, kz]
            ay = A[:, ky] - sy * A[:, kz]
            bx = B[:, kx] - sx * B[:, kz]
            by = B[:, ky] - sy * B[:, kz]
            cx = C[:, kx] - sx * C[:, kz]
            cy = C[:, ky] - sy * C[:, kz]
            u = cx * by - cy * bx
            v = ax * cy - ay * cx
            w = bx * ay - by * ax
            mixed = ((u < 0) | (v < 0) | (w < 0)) & ((u > 0) | (v > 0) | (w > 0))
            det = u + v + w
            tt = u * (sz * A[:, kz]) + v * (sz * B[:, kz]) + w * (sz * C[:, kz])
            hit = ~mixed & (det != 0.0) & (((det > 0) & (tt > 0)) | ((det < 0) & (tt < 0)))
            hits += np.bincount(rq[hit], minlength=n)
        inner = ~leaf
        iq, inn = q[inner], nodes[inner]
        q = np.concatenate([iq, iq])
        nodes = np.concatenate([left[inn], right[inn]])
    return hits


def _edge(x0, y0, x1, y1, px, py):
    return (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)


def rasterize_into(uvz, face_ids, entity, depth, ent_out, face_out, width, height, chunk=20000):
    T = len(uvz)
    if T == 0:
        return
    cand_pix, cand_z, cand_t = [], [], []
    for s in range(0, T, chunk):
        tri = uvz[s:s + chunk]
        u0, v0, z0 = tri[:, 0, 0], tri[:, 0, 1], tri[:, 0, 2]
        u1, v1, z1 = tri[:, 1, 0], tri[:, 1, 1], tri[:, 1, 2]
        u2, v2, z2 = tri[:, 2, 0], tri[:, 2, 1], tri[:, 2, 2]
        area = _edge(u0, v0, u1, v1, u2, v2)
        ok = (z0 > 1e-9) & (z1 > 1e-9) & (z2 > 1e-9) & (area != 0.0)
        umin = np.minimum(u0, np.minimum(u1, u2))
        umax = np.maximum(u0, np.maximum(u1, u2))
        vmin = np.minimum(v0, np.minimum(v1, v2))
        vmax = np.maximum(v0, np.maximum(v1, v2))
        with np.errstate(invalid="ignore"):
            xmin = np.maximum(np.floor(umin - 0.5), 0)
            xmax = np.minimum(np.ceil(umax - 0.5), width - 1)
            ymin = np.maximum(np.floor(vmin - 0.5), 0)
            ymax = np.minimum(np.ceil(vmax - 0.5), height - 1)
        nx = np.where(ok, np.maximum(xmax - xmin + 1, 0), 0).astype(np.int64)
        ny = np.where(ok, np.maximum(ymax - ymin + 1, 0), 0).astype(np.int64)
        cnt = nx * ny
        if cnt.sum() == 0:
            continue
        ti = np.repeat(np.arange(len(tri)), cnt)
        offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        x = xmin[ti].astype(np.int64) + offs % nx[ti]
        y = ymin[ti].astype(np.int64) + offs // nx[ti]
        px, py = x + 0.5, y + 0.5
        a = area[ti]
        w0 = _edge(u1[ti], v1[ti], u2[ti], v2[ti], px, py) / a
        w1 = _edge(u2[ti], v2[ti], u0[ti], v0[ti], px, py) / a
        w2 = _edge(u0[ti], v0[ti], u1[ti], v1[ti], px, py) / a
        inside = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
        ti, x, y, w0, w1, w2 = ti[inside], x[inside], y[inside], w0[inside], w1[inside], w2[inside]
        z = 1.0 / (w0 / z0[ti] + w1 / z1[ti] + w2 / z2[ti])
        cand_pix.append(y * width + x)
        cand_z.append(z)
        cand_t.append(ti + s)
    if not cand_pix:
        return
    pix = np.concatenate(cand_pix)
    z = np.concatenate(cand_z)
    t = np.concatenate(cand_t)
    order = np.lexsort((t, z, pix))
    pix, z, t = pix[order], z[order], t[order]
    first = np.ones(len(pix), bool)
    first[1:] = pix[1:] != pix[:-1]
    pix, z, t = pix[first], z[first], t[first]
    flat_d = depth.reshape(-1)
    win = z < flat_d[pix]
    pix, z, t = pix[win], z[win], t[win]
    flat_d[pix] = z
    ent_out.reshape(-1)[pix] = entity[t]
    face_out.reshape(-1)[pix] = face_ids[t]
