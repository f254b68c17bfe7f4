"""Procedural articulated capsule figures and simple object templates.

Figures are y-up, feet near y=0, facing +z.  Both the detailed human and its
smoother low-poly body proxy are meshed from the same signed distance field,
so the proxy plays the role of a fitted parametric body.
"""
from __future__ import annotations

import numpy as np

from ..geometry.mesh import box, cylinder, icosphere
from ..surface import ScalarGrid, marching_cubes

HUMAN_RES = 128
PROXY_RES = 90  # about half the triangle count of HUMAN_RES


def _rot(axis, angle):
    c, s = np.cos(angle), np.sin(angle)
    if axis == "x":
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    if axis == "y":
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def capsule_sdf(p, a, b, r):
    pa = p - a
    ba = b - a
    h = np.clip(pa @ ba / (ba @ ba), 0.0, 1.0)
    return np.linalg.norm(pa - h[:, None] * ba, axis=1) - r


def smooth_min(a, b, k):
    h = np.clip(0.5 + 0.5 * (b - a) / k, 0.0, 1.0)
    return b * (1 - h) + a * h - k * h * (1 - h)


def random_pose(rng):
    """Joint angles (radians) and body proportions for one figure."""
    return {
        "height": rng.uniform(1.55, 1.85),
        "girth": rng.uniform(0.9, 1.15),
        "hip_flex": rng.uniform(-0.5, 0.9, 2),      # per leg, positive = forward
        "hip_abd": rng.uniform(0.0, 0.35, 2),
        "knee": rng.uniform(0.0, 1.2, 2),
        "sh_abd": rng.uniform(0.2, 1.5, 2),         # 0 = arm down
        "sh_flex": rng.uniform(-0.4, 1.2, 2),
        "elbow": rng.uniform(0.0, 1.6, 2),
        "lean": rng.uniform(-0.15, 0.25),
        "twist": rng.uniform(-0.3, 0.3),
    }


def skeleton(pose):
    """Capsule list [(a, b, radius)] for a pose dict."""
    s = pose["height"] / 1.75
    g = pose["girth"]
    caps = []
    pelvis = np.array([0.0, 0.95, 0.0]) * s
    lean = _rot("x", pose["lean"]) @ _rot("y", pose["twist"])
    chest = pelvis + lean @ (np.array([0.0, 0.42, 0.0]) * s)
    neck = pelvis + lean @ (np.array([0.0, 0.55, 0.0]) * s)
    head = pelvis + lean @ (np.array([0.0, 0.68, 0.02]) * s)
    caps.append((pelvis, chest, 0.15 * s * g))
    caps.append((chest, neck, 0.06 * s * g))
    caps.append((head, head + np.array([0, 0.03, 0]) * s, 0.1 * s))
    for side, sgn in enumerate((-1.0, 1.0)):
        hip = pelvis + np.array([sgn * 0.09, -0.03, 0.0]) * s
        leg_rot = _rot("z", sgn * pose["hip_abd"][side]) @ _rot("x", -pose["hip_flex"][side])
        knee = hip + leg_rot @ (np.array([0.0, -0.43, 0.0]) * s)
        shin_rot = leg_rot @ _rot("x", pose["knee"][side])
        ankle = knee + shin_rot @ (np.array([0.0, -0.42, 0.0]) * s)
        toe = ankle + shin_rot @ (np.array([0.0, -0.02, 0.13]) * s)
        caps += [(hip, knee, 0.075 * s * g), (knee, ankle, 0.055 * s * g), (ankle, toe, 0.04 * s)]
        shoulder = pelvis + lean @ (np.array([sgn * 0.19, 0.45, 0.0]) * s)
        arm_rot = lean @ _rot("x", -pose["sh_flex"][side]) @ _rot("z", sgn * pose["sh_abd"][side])
        elbow = shoulder + arm_rot @ (np.array([0.0, -0.28, 0.0]) * s)
        fore_rot = arm_rot @ _rot("x", -pose["elbow"][side])
        wrist = elbow + fore_rot @ (np.array([0.0, -0.25, 0.0]) * s)
        hand = wrist + fore_rot @ (np.array([0.0, -0.07, 0.0]) * s)
        caps += [(chest * 0.3 + shoulder * 0.7, shoulder, 0.06 * s * g),
                 (shoulder, elbow, 0.045 * s * g), (elbow, wrist, 0.038 * s * g), (wrist, hand, 0.035 * s)]
    return caps


def figure_sdf(points, caps, blend=0.03):
    d = None
    for a, b, r in caps:
        di = capsule_sdf(points, a, b, r)
        d = di if d is None else smooth_min(d, di, blend)
    return d


def mesh_sdf(sdf, lo, hi, resolution):
    """Mesh the zero level set of ``sdf`` (negative inside) on a padded grid."""
    grid = ScalarGrid.over_box(lo, hi, resolution, margin=0.08)
    grid.values = -sdf(grid.node_positions()).reshape(grid.values.shape)
    mesh = marching_cubes(grid, 0.0)
    if not mesh.watertight:
        raise RuntimeError("figure surface is not closed; enlarge the grid margin")
    return mesh


def _caps_bounds(caps):
    pts = np.array([p for a, b, r in caps for p in (a - r, a + r, b - r, b + r)])
    return pts.min(axis=0), pts.max(axis=0)


def capsule_figure(seed, resolution=HUMAN_RES, proxy_resolution=PROXY_RES):
    """Return (human mesh, body proxy mesh, pose dict) for ``seed``."""
    rng = np.random.default_rng(seed)
    pose = random_pose(rng)
    caps = skeleton(pose)
    lo, hi = _caps_bounds(caps)
    human = mesh_sdf(lambda p: figure_sdf(p, caps), lo, hi, resolution)
    proxy = mesh_sdf(lambda p: figure_sdf(p, caps), lo, hi, proxy_resolution)
    return human, proxy, pose


OBJECT_KINDS = ("box", "cylinder", "sphere", "torus")


def make_object(kind, rng):
    """Watertight object template centred at the origin."""
    if kind == "box":
        return box(rng.uniform(0.25, 0.6, 3))
    if kind == "cylinder":
        return cylinder(rng.uniform(0.12, 0.25), rng.uniform(0.3, 0.8), segments=32)
    if kind == "sphere":
        return icosphere(3, rng.uniform(0.15, 0.3))
    if kind == "torus":
        R, r = rng.uniform(0.18, 0.28), rng.uniform(0.05, 0.09)

        def sdf(p):
            q = np.stack([np.linalg.norm(p[:, [0, 2]], axis=1) - R, p[:, 1]], 1)
            return np.linalg.norm(q, axis=1) - r

        ext = np.array([R + r, r, R + r])
        return mesh_sdf(sdf, -ext, ext, 48)
    raise ValueError(f"unknown object kind {kind!r}")


def random_object(seed):
    rng = np.random.default_rng(seed)
    kind = OBJECT_KINDS[int(rng.integers(len(OBJECT_KINDS)))]
    return kind, make_object(kind, rng)
