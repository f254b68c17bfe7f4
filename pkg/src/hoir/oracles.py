"""Independent reference computations used to check the fast paths.

Nothing here shares code with the kernels it checks: brute force over every
triangle, generalised winding numbers, analytic ray casts, central finite
differences.
"""
import numpy as np


def winding_number(mesh, points, chunk=None):
    """Generalised winding number (solid-angle sum / 4 pi) of ``points``."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    tri = mesh.triangles
    chunk = chunk or max(1, 1_000_000 // max(1, len(tri)))
    out = np.empty(len(p))
    for s in range(0, len(p), chunk):
        q = p[s:s + chunk, None, None, :]
        abc = tri[None] - q                      # (n, T, 3, 3)
        a, b, c = abc[:, :, 0], abc[:, :, 1], abc[:, :, 2]
        la, lb, lc = (np.linalg.norm(x, axis=-1) for x in (a, b, c))
        det = np.einsum("ntk,ntk->nt", a, np.cross(b, c))
        den = (la * lb * lc + np.einsum("ntk,ntk->nt", a, b) * lc
               + np.einsum("ntk,ntk->nt", a, c) * lb + np.einsum("ntk,ntk->nt", b, c) * la)
        out[s:s + chunk] = (2.0 * np.arctan2(det, den)).sum(axis=1) / (4 * np.pi)
    return out


def winding_inside(mesh, points):
    return (winding_number(mesh, points) > 0.5).astype(np.uint8)


def point_triangle_distance(p, a, b, c):
    """Exact point/triangle distance by projection + edge fallbacks (no region walk)."""
    n = np.cross(b - a, c - a)
    nn = np.einsum("...k,...k->...", n, n)
    t = np.einsum("...k,...k->...", p - a, n) / nn
    proj = p - t[..., None] * n
    # barycentric coordinates of the projection
    v0, v1, v2 = b - a, c - a, proj - a
    d00 = np.einsum("...k,...k->...", v0, v0)
    d01 = np.einsum("...k,...k->...", v0, v1)
    d11 = np.einsum("...k,...k->...", v1, v1)
    d20 = np.einsum("...k,...k->...", v2, v0)
    d21 = np.einsum("...k,...k->...", v2, v1)
    den = d00 * d11 - d01 * d01
    bv = (d11 * d20 - d01 * d21) / den
    bw = (d00 * d21 - d01 * d20) / den
    bu = 1.0 - bv - bw
    inside = (bu >= 0) & (bv >= 0) & (bw >= 0)
    best_pt = np.where(inside[..., None], proj, np.nan)
    best = np.where(inside, np.linalg.norm(p - proj, axis=-1), np.inf)
    for e0, e1 in ((a, b), (b, c), (c, a)):
        d = e1 - e0
        s = np.clip(np.einsum("...k,...k->...", p - e0, d) / np.einsum("...k,...k->...", d, d), 0, 1)
        q = e0 + s[..., None] * d
        dist = np.linalg.norm(p - q, axis=-1)
        better = dist < best
        best = np.where(better, dist, best)
        best_pt = np.where(better[..., None], q, best_pt)
    return best, best_pt


def brute_closest(mesh, points):
    """Closest point by exhaustive search over all triangles."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    tri = mesh.triangles
    out_d = np.empty(len(p))
    out_p = np.empty((len(p), 3))
    chunk = max(1, 2_000_000 // max(1, len(tri)))
    for s in range(0, len(p), chunk):
        q = p[s:s + chunk, None, :]
        d, pt = point_triangle_distance(q, tri[None, :, 0], tri[None, :, 1], tri[None, :, 2])
        k = np.argmin(d, axis=1)
        out_d[s:s + chunk] = d[np.arange(len(k)), k]
        out_p[s:s + chunk] = pt[np.arange(len(k)), k]
    return out_p, out_d


def brute_min_distance(mesh, points):
    return brute_closest(mesh, points)[1]


def ray_sphere_depth(camera, center, radius):
    """Analytic camera-space depth of a sphere at every pixel centre (+inf on miss)."""
    H, W = camera.height, camera.width
    ys, xs = np.mgrid[0:H, 0:W] + 0.5
    dirs = np.stack([(xs - camera.cx) / camera.fx, (ys - camera.cy) / camera.fy, np.ones_like(xs)], -1)
    c = camera.to_camera(np.asarray(center, dtype=np.float64))
    a = np.einsum("...k,...k->...", dirs, dirs)
    b = -2 * dirs @ c
    cc = c @ c - radius ** 2
    disc = b * b - 4 * a * cc
    with np.errstate(invalid="ignore"):
        t = (-b - np.sqrt(disc)) / (2 * a)
    return np.where(disc >= 0, t, np.inf)  # t is the z value since dirs have unit z


def ray_cast_visible(points, camera, meshes, eps):
    """Visibility by casting a ray from the camera centre to each point.

    A point is hidden iff some triangle crosses the segment more than ``eps``
    in front of the point (depth measured along the camera z axis).
    """
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    pc = camera.to_camera(p)
    u = camera.fx * pc[:, 0] / pc[:, 2] + camera.cx
    v = camera.fy * pc[:, 1] / pc[:, 2] + camera.cy
    inimg = (pc[:, 2] > 0) & (u >= 0) & (u < camera.width) & (v >= 0) & (v < camera.height)
    # sample the ray through the pixel centre, like the raster does
    px = np.floor(u) + 0.5
    py = np.floor(v) + 0.5
    dirs = np.stack([(px - camera.cx) / camera.fx, (py - camera.cy) / camera.fy, np.ones(len(p))], 1)
    zmin = np.full(len(p), np.inf)
    for m in meshes:
        zmin = np.minimum(zmin, _nearest_hit(dirs, camera.to_camera(m.vertices)[m.faces]))
    return (inimg & (pc[:, 2] <= zmin + eps)).astype(np.uint8)


def _nearest_hit(dirs, tri, chunk=256):
    """Smallest positive ray parameter of rays from the camera centre along
    ``dirs`` (unit z component, so the parameter is depth) against camera-space
    triangles ``tri``; +inf on a miss."""
    out = np.full(len(dirs), np.inf)
    e1 = (tri[:, 1] - tri[:, 0])[None]
    e2 = (tri[:, 2] - tri[:, 0])[None]
    for s in range(0, len(dirs), chunk):
        d = dirs[s:s + chunk, None, :]
        h = np.cross(d, e2)
        det = np.einsum("ntk,ntk->nt", e1, h)
        with np.errstate(divide="ignore", invalid="ignore"):
            f = 1.0 / det
            sv = -tri[None, :, 0]
            uu = f * np.einsum("ntk,ntk->nt", sv, h)
            qv = np.cross(sv, e1)
            vv = f * np.einsum("ntk,ntk->nt", d, qv)
            tt = f * np.einsum("ntk,ntk->nt", e2, qv)
        ok = (np.abs(det) > 1e-15) & (uu >= 0) & (vv >= 0) & (uu + vv <= 1) & (tt > 0)
        out[s:s + chunk] = np.where(ok, tt, np.inf).min(axis=1)
    return out


def ray_cast_first_hit(camera, meshes, pixels):
    """Index into ``meshes`` of the first surface hit by the ray through each
    (col, row) pixel centre, -1 on a miss."""
    px = np.asarray(pixels, dtype=np.float64).reshape(-1, 2) + 0.5
    dirs = np.stack([(px[:, 0] - camera.cx) / camera.fx, (px[:, 1] - camera.cy) / camera.fy,
                     np.ones(len(px))], 1)
    t = np.stack([_nearest_hit(dirs, camera.to_camera(m.vertices)[m.faces]) for m in meshes], 1)
    return np.where(np.isfinite(t.min(axis=1)), t.argmin(axis=1), -1)


def bilinear(grid, fx, fy):
    """Reference bilinear lookup on a (C, H, W) array at fractional (x, y)."""
    C, H, W = grid.shape
    x0 = int(np.floor(fx)); y0 = int(np.floor(fy))
    out = np.zeros(C)
    for dy in (0, 1):
        for dx in (0, 1):
            xi = min(max(x0 + dx, 0), W - 1)
            yi = min(max(y0 + dy, 0), H - 1)
            wx = (fx - x0) if dx else (1 - (fx - x0))
            wy = (fy - y0) if dy else (1 - (fy - y0))
            out += wx * wy * grid[:, yi, xi]
    return out


def central_difference(f, params, h=1e-4):
    """Central finite differences of scalar ``f()`` w.r.t. each array in ``params``."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            fp = f()
            p[i] = old - h
            fm = f()
            p[i] = old
            g[i] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads
