"""Pinhole camera with a rigid world-to-camera pose."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class BehindCameraError(ValueError):
    pass


# World is y-up; the camera sits at the origin looking down world -z with image
# rows growing downwards, i.e. a 180 degree turn about x.
DEFAULT_ROTATION = np.diag([1.0, -1.0, -1.0])


@dataclass
class PerspectiveCamera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray = field(default_factory=lambda: DEFAULT_ROTATION.copy())
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the raster")
        err = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        if err >= 1e-6:
            raise ValueError(f"pose rotation not orthonormal (err {err:.2e})")

    @classmethod
    def default(cls, size=64, fov_focal=500.0 / 512.0):
        """Square camera; focal scaled so that 512 px gives fx=fy=500."""
        f = fov_focal * size
        return cls(f, f, size / 2.0, size / 2.0, size, size)

    @property
    def intrinsics(self):
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])

    def projection_matrix(self):
        return self.intrinsics @ np.hstack([self.rotation, self.translation[:, None]])

    def to_camera(self, points):
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def depth(self, points):
        """Camera-space z of world points."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation[2] + self.translation[2]

    def project(self, points, check=True):
        """World points -> (u, v, z).  Works on a single point or an (N, 3) array."""
        p = np.asarray(points, dtype=np.float64)
        single = p.ndim == 1
        pc = self.to_camera(p.reshape(-1, 3))
        z = pc[:, 2]
        if check and np.any(z <= 0):
            raise BehindCameraError("point behind camera (camera-space z <= 0)")
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * pc[:, 0] / z + self.cx
            v = self.fy * pc[:, 1] / z + self.cy
        if single:
            return float(u[0]), float(v[0]), float(z[0])
        return u, v, z

    def to_dict(self):
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
            "rotation": self.rotation.tolist(), "translation": self.translation.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["fx"], d["fy"], d["cx"], d["cy"], int(d["width"]), int(d["height"]),
                   np.array(d["rotation"]), np.array(d["translation"]))


def project(camera, p):
    return camera.project(p)
