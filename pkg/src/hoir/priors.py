"""Pose-prior features per query point and the body-centred frame.

Each point gets three numbers: its signed distance to a template surface, a
visibility bit for the template point nearest to it, and its camera depth
relative to the body centre.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geometry.camera import BehindCameraError
from .geometry.queries import closest_points, occupancy
from .geometry.raster import vis_tolerance, visible


@dataclass
class AnchorFrame:
    center: np.ndarray
    z_c: float


@dataclass
class PosePrior:
    d: np.ndarray
    v: np.ndarray
    z: np.ndarray

    def as_array(self, dtype=np.float64):
        return np.stack([self.d, self.v, self.z], -1).astype(dtype)


def anchor_frame(body_proxy, camera):
    center = body_proxy.centroid()
    z_c = float(camera.depth(center))
    if z_c <= 0:
        raise BehindCameraError("body centre is behind the camera")
    return AnchorFrame(center, z_c)


def pose_prior(x, template, joint_buffer, camera, frame, eps=None):
    """Prior triple for scene-space point(s) ``x``.

    ``eps`` is the visibility depth slack; by default 0.5% of the template
    bounding-box diagonal.
    """
    p = np.asarray(x, dtype=np.float64)
    single = p.ndim == 1
    p = p.reshape(-1, 3)
    if eps is None:
        eps = vis_tolerance(template.bbox_diagonal())
    cp, dist, _ = closest_points(template, p)
    d = np.where(occupancy(template, p) == 1, -dist, dist)
    v = visible(cp, camera, joint_buffer, eps).astype(np.float64)
    z = camera.depth(p) - frame.z_c
    if single:
        return PosePrior(float(d[0]), float(v[0]), float(z[0]))
    return PosePrior(d, v, z)


def recenter(batch, frame):
    """Shift a batch so that ``frame.center`` becomes the origin."""
    return replace(batch, positions=batch.positions - frame.center, origin=batch.origin + frame.center,
                   scene_positions=batch.world())


def scene_diagonal(scene):
    lo, hi = scene.joint_bounds()
    return float(np.linalg.norm(hi - lo))


def entity_priors(scene, bundle, frame, world_points, entity):
    """Prior features of ``world_points`` for one entity of a scene view.

    The human prior uses the body proxy as template, the object prior the
    posed object mesh.
    """
    template = scene.body_proxy if entity == "human" else scene.object_mesh
    eps = vis_tolerance(scene_diagonal(scene))
    return pose_prior(world_points, template, bundle.joint_depth, bundle.camera, frame, eps).as_array()
