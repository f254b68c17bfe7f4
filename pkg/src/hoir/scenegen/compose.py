"""Scene composition (object brought into contact with the figure), view
placement and per-view rendering of images and masks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry.camera import PerspectiveCamera
from ..geometry.mesh import TriangleMesh
from ..geometry.queries import closest_points, occupancy
from ..geometry.raster import DepthBuffer, rasterize

HUMAN_ID = 1
OBJECT_ID = 2
CHANNELS = ("silhouette", "depth", "normal_x", "normal_y", "normal_z")
PEN_FRACTION = 1e-3


class NoContactError(RuntimeError):
    """The object cannot be brought into contact along the centre line."""


class NoViewsError(RuntimeError):
    """Every candidate view was discarded."""


def penetration_tolerance(human):
    return PEN_FRACTION * human.bbox_diagonal()


def random_rotation(rng):
    """Uniformly distributed rotation matrix (unit quaternion sampling)."""
    u1, u2, u3 = rng.random(3)
    a, b = np.sqrt(1 - u1), np.sqrt(u1)
    w, x, y, z = (a * np.sin(2 * np.pi * u2), a * np.cos(2 * np.pi * u2),
                  b * np.sin(2 * np.pi * u3), b * np.cos(2 * np.pi * u3))
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def rot_y(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def bbox_center(mesh):
    lo, hi = mesh.bounds()
    return (lo + hi) / 2


@dataclass
class RigidTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)

    def apply(self, points):
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def to_dict(self):
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["rotation"]), np.array(d["translation"]))


@dataclass
class SceneSpec:
    human_mesh: TriangleMesh
    object_mesh: TriangleMesh        # already posed
    object_pose: RigidTransform      # template frame -> scene frame
    body_proxy: TriangleMesh
    translations: list = field(default_factory=list)
    seed: int = 0

    @property
    def delta_pen(self):
        return penetration_tolerance(self.human_mesh)

    def joint_bounds(self):
        lo_h, hi_h = self.human_mesh.bounds()
        lo_o, hi_o = self.object_mesh.bounds()
        return np.minimum(lo_h, lo_o), np.maximum(hi_h, hi_o)

    def pivot(self):
        lo, hi = self.joint_bounds()
        return (lo + hi) / 2

    def radius(self):
        """Radius of a sphere around ``pivot`` holding both meshes."""
        c = self.pivot()
        v = np.concatenate([self.human_mesh.vertices, self.object_mesh.vertices])
        return float(np.sqrt(((v - c) ** 2).sum(1).max()))


# -- contact -------------------------------------------------------------------

def _penetrates(human, obj, offset):
    """Any vertex strictly inside the other mesh once ``obj`` is shifted by ``offset``."""
    if occupancy(human, obj.vertices + offset).any():
        return True
    return bool(occupancy(obj, human.vertices - offset).any())


def _clearance(human, obj, offset, obj_center, obj_radius):
    """Smallest vertex-to-surface distance between the two meshes (both ways)."""
    _, d_o, _ = closest_points(human, obj.vertices + offset)
    g = float(d_o.min())
    # only human vertices that could be closer than g to the object matter
    hv = human.vertices - offset
    near = np.linalg.norm(hv - obj_center, axis=1) <= obj_radius + g
    if near.any():
        _, d_h, _ = closest_points(obj, hv[near])
        g = min(g, float(d_h.min()))
    return g


def compose_scene(human, obj, seed, body_proxy=None, max_iter=400):
    """Rotate ``obj`` at random, then slide it along the line joining the two
    bounding-box centres until it first touches ``human``.

    The search alternates conservative advancement (never moving by more than
    the current vertex clearance plus a small overshoot) with bisection once
    an overshoot produces penetration.  The returned placement is the last
    penetration-free offset, within ``delta_pen`` of contact.  Without a
    ``body_proxy`` the human mesh itself serves as proxy.
    """
    if not (human.watertight and obj.watertight):
        raise ValueError("compose_scene needs watertight meshes")
    rng = np.random.default_rng(seed)
    tol = penetration_tolerance(human)
    c_obj = bbox_center(obj)
    rot = random_rotation(rng)
    posed = obj.transformed(rotation=rot, translation=c_obj - rot @ c_obj)

    c_h = bbox_center(human)
    r_h = float(np.linalg.norm(human.vertices - c_h, axis=1).max())
    r_o = float(np.linalg.norm(posed.vertices - c_obj, axis=1).max())
    gap = c_h - c_obj
    dist = float(np.linalg.norm(gap))
    shift = np.zeros(3)
    if dist < 1e-12:
        theta = rng.uniform(0, 2 * np.pi)
        direction = np.array([np.cos(theta), 0.0, np.sin(theta)])
        shift = -direction * (r_h + r_o + tol)
        dist = r_h + r_o + tol
    else:
        direction = gap / dist
    posed = posed.translated(shift)
    c_obj = c_obj + shift

    # start from a guaranteed-free offset (bounding spheres apart)
    s = min(0.0, dist - (r_h + r_o) - tol) if _penetrates(human, posed, np.zeros(3)) else 0.0
    s_end = dist + r_h + r_o
    overshoot = 0.01 * human.bbox_diagonal()
    hi = None
    for _ in range(max_iter):
        g = _clearance(human, posed, s * direction, c_obj + s * direction, r_o)
        if g < tol / 2:
            break
        step = g + min(0.5 * g, overshoot)
        if _penetrates(human, posed, (s + step) * direction):
            hi = s + step
            break
        s += step
        if s > s_end:
            raise NoContactError("object passed the figure without touching it")
    else:
        raise NoContactError("contact search did not converge")
    if hi is not None:
        while hi - s >= tol / 2:
            mid = 0.5 * (s + hi)
            if _penetrates(human, posed, mid * direction):
                hi = mid
            else:
                s = mid
    final = posed.translated(s * direction)
    pose = RigidTransform(rot, c_obj - rot @ bbox_center(obj) + s * direction)
    proxy = human if body_proxy is None else body_proxy
    return SceneSpec(human, final, pose, proxy, [], int(seed))


# -- views -----------------------------------------------------------------------

def view_camera(base, pivot, translation, azimuth):
    """Camera seeing the scene turned by ``azimuth`` about the vertical axis
    through ``pivot`` and then moved by ``translation`` in the base frame."""
    ry = rot_y(azimuth)
    rotation = base.rotation @ ry
    trans = base.rotation @ (np.asarray(translation, dtype=np.float64) - ry @ pivot) + base.translation
    return PerspectiveCamera(base.fx, base.fy, base.cx, base.cy, base.width, base.height, rotation, trans)


def _half_fov(camera):
    hx = np.arctan(min(camera.cx, camera.width - camera.cx) / camera.fx)
    hy = np.arctan(min(camera.cy, camera.height - camera.cy) / camera.fy)
    return float(min(hx, hy))


def sample_translations(scene, camera, n, rng):
    """Offsets in the base camera frame that keep the scene's bounding sphere
    inside the field of view at every azimuth."""
    fov = _half_fov(camera)
    r = scene.radius()
    out = []
    for _ in range(n):
        dist = r / np.sin(fov) * 1.05 + rng.uniform(0.0, 0.15) * r
        slack = max(0.0, fov - np.arcsin(r / dist)) * 0.8
        ax, ay = rng.uniform(-slack, slack, 2) / np.sqrt(2)
        # world offset for a camera looking down world -z
        point_cam = np.array([np.tan(ax) * dist, np.tan(ay) * dist, dist])
        out.append(camera.rotation.T @ (point_cam - camera.translation))
    return out


def sphere_in_view(camera, center, radius):
    """True if a sphere projects entirely inside the raster (conservative)."""
    pc = camera.to_camera(center)
    if pc[2] <= radius:
        return False
    for axis, focal, c, size in ((0, camera.fx, camera.cx, camera.width), (1, camera.fy, camera.cy, camera.height)):
        half = np.arctan(np.array([c, size - c]) / focal)
        ang = np.arctan2(pc[axis], pc[2])
        spread = np.arcsin(radius / np.linalg.norm(pc))
        if ang - spread < -half[0] or ang + spread > half[1]:
            return False
    return True


@dataclass
class ViewConfig:
    translation_index: int
    azimuth: float
    camera: PerspectiveCamera

    def to_dict(self):
        return {"translation_index": self.translation_index, "azimuth": self.azimuth,
                "camera": self.camera.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["translation_index"]), float(d["azimuth"]), PerspectiveCamera.from_dict(d["camera"]))


def candidate_views(scene, camera, n_trans, n_views):
    pivot = scene.pivot()
    out = []
    for ti, t in enumerate(scene.translations[:n_trans]):
        for a in np.linspace(0.0, 2 * np.pi, n_views, endpoint=False):
            out.append(ViewConfig(ti, float(a), view_camera(camera, pivot, t, a)))
    return out


def object_visible(scene, camera):
    buf = rasterize(camera, [(scene.human_mesh, HUMAN_ID), (scene.object_mesh, OBJECT_ID)])
    return bool(buf.entity_mask(OBJECT_ID).any())


def place_views(scene, camera, n_trans, n_views, seed=None):
    """Candidate (translation, azimuth) views with a visible object.

    Missing translations are sampled (and stored on ``scene``) from ``seed``,
    defaulting to the scene seed.
    """
    if n_trans < 1 or n_views < 1:
        raise ValueError("n_trans and n_views must be >= 1")
    if len(scene.translations) < n_trans:
        rng = np.random.default_rng([scene.seed if seed is None else seed, 1])
        scene.translations = list(scene.translations) + sample_translations(
            scene, camera, n_trans - len(scene.translations), rng)
    kept = [v for v in candidate_views(scene, camera, n_trans, n_views) if object_visible(scene, v.camera)]
    if not kept:
        raise NoViewsError("the object is out of view (or hidden) in every candidate view")
    return kept


# -- rendering ---------------------------------------------------------------------

@dataclass
class ViewBundle:
    I_f: np.ndarray
    I_p: np.ndarray
    I_h: np.ndarray
    I_o: np.ndarray
    S_N: np.ndarray
    M_s: np.ndarray
    M_p: np.ndarray
    M_o: np.ndarray
    M_i: np.ndarray
    joint_depth: DepthBuffer
    camera: PerspectiveCamera

    @property
    def shape(self):
        return self.M_s.shape


def _channels(buf, normals, camera, z_ref, scale):
    """Five-channel raster from a depth buffer; ``normals`` maps entity id to
    per-face world normals."""
    out = np.zeros((len(CHANNELS), buf.height, buf.width), np.float32)
    m = buf.mask
    out[0][m] = 1.0
    out[1][m] = (buf.depth[m] - z_ref) / scale
    for eid, fn in normals.items():
        sel = buf.entity_id == eid
        if sel.any():
            n = fn[buf.face_id[sel]] @ camera.rotation.T
            out[2:, sel] = n.T
    return out


def render_view(scene, camera):
    human, obj = scene.human_mesh, scene.object_mesh
    normals = {HUMAN_ID: human.face_normals(), OBJECT_ID: obj.face_normals()}
    z_ref = float(camera.depth(scene.pivot()))
    scale = scene.radius()

    joint = rasterize(camera, [(human, HUMAN_ID), (obj, OBJECT_ID)])
    alone = rasterize(camera, [(human, HUMAN_ID)])
    full = _channels(joint, normals, camera, z_ref, scale)
    I_h = _channels(alone, normals, camera, z_ref, scale)

    M_s = alone.mask
    M_p = joint.entity_mask(HUMAN_ID)
    M_o = joint.entity_mask(OBJECT_ID)
    M_i = M_s & ~M_p
    I_p = I_h * M_p
    I_o = full * M_o
    S_N = np.ascontiguousarray(I_h[2:])
    proxy_buf = rasterize(camera, [(scene.body_proxy, HUMAN_ID), (obj, OBJECT_ID)])
    return ViewBundle(full, I_p, I_h, I_o, S_N, M_s, M_p, M_o, M_i, proxy_buf, camera)


def oracle_inpaint(bundle):
    """Fill the occluded body pixels of I_p from the ground-truth human raster."""
    out = bundle.I_p.copy()
    out[:, bundle.M_i] = bundle.I_h[:, bundle.M_i]
    return out
