"""numba loop kernels for triangle queries and rasterisation."""
import numpy as np

from ..accel import optional_njit


@optional_njit
def closest_on_triangle(px, py, pz, tri):
    """Closest point on one triangle (Ericson's region walk). Returns (x, y, z)."""
    ax, ay, az = tri[0, 0], tri[0, 1], tri[0, 2]
    bx, by, bz = tri[1, 0], tri[1, 1], tri[1, 2]
    cx, cy, cz = tri[2, 0], tri[2, 1], tri[2, 2]
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay, az
    bpx, bpy, bpz = px - bx, py - by, pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bx, by, bz
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return ax + v * abx, ay + v * aby, az + v * abz
    cpx, cpy, cpz = px - cx, py - cy, pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cx, cy, cz
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return ax + w * acx, ay + w * acy, az + w * acz
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return bx + w * (cx - bx), by + w * (cy - by), bz + w * (cz - bz)
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return ax + abx * v + acx * w, ay + aby * v + acy * w, az + abz * v + acz * w


@optional_njit
def _box_d2(px, py, pz, lo, hi, node):
    d = 0.0
    q = (px, py, pz)
    for a in range(3):
        if q[a] < lo[node, a]:
            t = lo[node, a] - q[a]
            d += t * t
        elif q[a] > hi[node, a]:
            t = q[a] - hi[node, a]
            d += t * t
    return d


@optional_njit
def _near_faces(px, py, pz, limit, tris, tri_index, lo, hi, left, right, start, count, stack):
    """Among faces with squared distance <= ``limit`` (or the nearest one when
    ``limit`` is inf) return the one with the smallest distance, ties going to
    the smallest face index.  With a finite limit the smallest index wins
    outright, which is what makes near-ties independent of roundoff."""
    best = np.inf
    bx = by = bz = 0.0
    bf = np.iinfo(np.int64).max
    bound = limit
    sp = 0
    stack[sp] = 0
    sp += 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if _box_d2(px, py, pz, lo, hi, node) > bound:
            continue
        l = left[node]
        if l < 0:
            for t in range(start[node], start[node] + count[node]):
                qx, qy, qz = closest_on_triangle(px, py, pz, tris[t])
                dx, dy, dz = px - qx, py - qy, pz - qz
                d2 = dx * dx + dy * dy + dz * dz
                if limit < np.inf:
                    take = d2 <= limit and tri_index[t] < bf
                else:
                    take = d2 < best or (d2 == best and tri_index[t] < bf)
                if take:
                    best = d2
                    bx, by, bz = qx, qy, qz
                    bf = tri_index[t]
                    if limit == np.inf:
                        bound = best
            continue
        r = right[node]
        dl = _box_d2(px, py, pz, lo, hi, l)
        dr = _box_d2(px, py, pz, lo, hi, r)
        # push the farther child first so the nearer one is visited next
        if dl <= dr:
            stack[sp] = r
            stack[sp + 1] = l
        else:
            stack[sp] = l
            stack[sp + 1] = r
        sp += 2
    return bx, by, bz, best, bf


@optional_njit
def closest_points(points, tris, tri_index, lo, hi, left, right, start, count, tie):
    n = points.shape[0]
    out = np.empty((n, 3))
    d2out = np.empty(n)
    fout = np.empty(n, np.int64)
    stack = np.empty(128, np.int64)
    for i in range(n):
        px, py, pz = points[i, 0], points[i, 1], points[i, 2]
        bx, by, bz, best, bf = _near_faces(px, py, pz, np.inf, tris, tri_index, lo, hi, left, right,
                                           start, count, stack)
        if tie > 0.0:
            s = np.sqrt(best) + tie
            bx, by, bz, best, bf = _near_faces(px, py, pz, s * s, tris, tri_index, lo, hi, left, right,
                                               start, count, stack)
        out[i, 0], out[i, 1], out[i, 2] = bx, by, bz
        d2out[i] = best
        fout[i] = bf
    return out, d2out, fout


@optional_njit
def ray_tri_hit(ox, oy, oz, kx, ky, kz, sx, sy, sz, tri):
    """Watertight ray/triangle test in sheared space; returns 1 for a hit at t > 0.

    Edge functions of a shared edge are exact negatives of each other, so a ray
    crossing a closed mesh is counted exactly once at every crossing.
    """
    ax = tri[0, kx] - (ox, oy, oz)[kx]
    ay = tri[0, ky] - (ox, oy, oz)[ky]
    az = tri[0, kz] - (ox, oy, oz)[kz]
    bx = tri[1, kx] - (ox, oy, oz)[kx]
    by = tri[1, ky] - (ox, oy, oz)[ky]
    bz = tri[1, kz] - (ox, oy, oz)[kz]
    cx = tri[2, kx] - (ox, oy, oz)[kx]
    cy = tri[2, ky] - (ox, oy, oz)[ky]
    cz = tri[2, kz] - (ox, oy, oz)[kz]
    ax = ax - sx * az
    ay = ay - sy * az
    bx = bx - sx * bz
    by = by - sy * bz
    cx = cx - sx * cz
    cy = cy - sy * cz
    u = cx * by - cy * bx
    v = ax * cy - ay * cx
    w = bx * ay - by * ax
    if (u < 0.0 or v < 0.0 or w < 0.0) and (u > 0.0 or v > 0.0 or w > 0.0):
        return 0
    det = u + v + w
    if det == 0.0:
        return 0
    t = u * (sz * az) + v * (sz * bz) + w * (sz * cz)
    if det > 0.0:
        return 1 if t > 0.0 else 0
    return 1 if t < 0.0 else 0


@optional_njit
def _ray_box(ox, oy, oz, inv, lo, hi, node):
    tmin = 0.0
    tmax = np.inf
    o = (ox, oy, oz)
    for a in range(3):
        t1 = (lo[node, a] - o[a]) * inv[a]
        t2 = (hi[node, a] - o[a]) * inv[a]
        if t1 > t2:
            t1, t2 = t2, t1
        if t1 > tmin:
            tmin = t1
        if t2 < tmax:
            tmax = t2
    return tmin <= tmax


@optional_njit
def ray_hit_counts(points, direction, tris, lo, hi, left, right, start, count):
    kz = 0
    for a in range(1, 3):
        if abs(direction[a]) > abs(direction[kz]):
            kz = a
    kx = (kz + 1) % 3
    ky = (kx + 1) % 3
    if direction[kz] < 0.0:
        kx, ky = ky, kx
    sx = direction[kx] / direction[kz]
    sy = direction[ky] / direction[kz]
    sz = 1.0 / direction[kz]
    inv = np.empty(3)
    for a in range(3):
        inv[a] = 1.0 / direction[a] if direction[a] != 0.0 else np.inf
    n = points.shape[0]
    hits = np.zeros(n, np.int64)
    stack = np.empty(128, np.int64)
    for i in range(n):
        ox, oy, oz = points[i, 0], points[i, 1], points[i, 2]
        sp = 0
        stack[sp] = 0
        sp += 1
        c = 0
        while sp > 0:
            sp -= 1
            node = stack[sp]
            if not _ray_box(ox, oy, oz, inv, lo, hi, node):
                continue
            l = left[node]
            if l < 0:
                for t in range(start[node], start[node] + count[node]):
                    c += ray_tri_hit(ox, oy, oz, kx, ky, kz, sx, sy, sz, tris[t])
                continue
            stack[sp] = right[node]
            stack[sp + 1] = l
            sp += 2
        hits[i] = c
    return hits


@optional_njit
def edge_fn(x0, y0, x1, y1, px, py):
    return (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)


@optional_njit
def rasterize_into(uvz, face_ids, entity, depth, ent_out, face_out, width, height):
    """Z-buffer triangles whose projected vertices are given in ``uvz`` (T, 3, 3).

    Strict depth test, so on equal depth the earliest triangle keeps the pixel.
    """
    for t in range(uvz.shape[0]):
        u0, v0, z0 = uvz[t, 0, 0], uvz[t, 0, 1], uvz[t, 0, 2]
        u1, v1, z1 = uvz[t, 1, 0], uvz[t, 1, 1], uvz[t, 1, 2]
        u2, v2, z2 = uvz[t, 2, 0], uvz[t, 2, 1], uvz[t, 2, 2]
        if z0 <= 1e-9 or z1 <= 1e-9 or z2 <= 1e-9:
            continue
        area = edge_fn(u0, v0, u1, v1, u2, v2)
        if area == 0.0:
            continue
        xmin = max(int(np.floor(min(u0, min(u1, u2)) - 0.5)), 0)
        xmax = min(int(np.ceil(max(u0, max(u1, u2)) - 0.5)), width - 1)
        ymin = max(int(np.floor(min(v0, min(v1, v2)) - 0.5)), 0)
        ymax = min(int(np.ceil(max(v0, max(v1, v2)) - 0.5)), height - 1)
        for y in range(ymin, ymax + 1):
            py = y + 0.5
            for x in range(xmin, xmax + 1):
                px = x + 0.5
                w0 = edge_fn(u1, v1, u2, v2, px, py) / area
                w1 = edge_fn(u2, v2, u0, v0, px, py) / area
                w2 = edge_fn(u0, v0, u1, v1, px, py) / area
                if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                    continue
                z = 1.0 / (w0 / z0 + w1 / z1 + w2 / z2)
                if z < depth[y, x]:
                    depth[y, x] = z
                    ent_out[y, x] = entity[t]
                    face_out[y, x] = face_ids[t]
