"""Occupancy-labelled query points around the ground-truth surfaces."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .geometry.mesh import MeshError
from .geometry.queries import occupancy
from .priors import recenter

ENTITIES = ("human", "object")
MAGIC = b"HOPT"


@dataclass
class SamplerConfig:
    n_total: int = 20000
    n_subset: int = 2000
    sigmas: tuple = (0.06, 0.01, 0.035)
    uniform_fraction: float = 1.0 / 16.0
    bbox_margin: float = 0.1

    def validate(self):
        if not 1 <= self.n_subset <= self.n_total:
            raise ValueError("need 1 <= n_subset <= n_total")
        if not self.sigmas or min(self.sigmas) <= 0:
            raise ValueError("sigmas must be a non-empty list of positive values")
        if not 0.0 <= self.uniform_fraction <= 1.0:
            raise ValueError("uniform_fraction must lie in [0, 1]")
        if self.bbox_margin < 0:
            raise ValueError("bbox_margin must be non-negative")
        return self


@dataclass
class PointBatch:
    positions: np.ndarray               # (N, 3)
    labels: np.ndarray                  # (N,) uint8
    entity: str
    view_id: int = -1
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))  # add to get scene coordinates
    scene_positions: np.ndarray | None = None  # exact pre-shift copy kept by recenter

    def __len__(self):
        return len(self.positions)

    def world(self):
        # (x - c) + c is not always x in floating point, so prefer the copy
        if self.scene_positions is not None:
            return self.scene_positions
        return self.positions + self.origin


def sample_surface(mesh, n, rng):
    """Area-uniform points on the surface."""
    areas = mesh.face_areas()
    total = areas.sum()
    if not total > 0:
        raise MeshError("cannot sample a mesh with zero surface area")
    fi = rng.choice(len(areas), size=n, p=areas / total)
    r1, r2 = rng.random(n), rng.random(n)
    s = np.sqrt(r1)
    t = mesh.triangles[fi]
    return (1 - s)[:, None] * t[:, 0] + (s * (1 - r2))[:, None] * t[:, 1] + (s * r2)[:, None] * t[:, 2]


def sample_surface_gaussian(mesh, n, sigma, rng):
    """Surface samples displaced by isotropic Gaussian noise.

    ``sigma`` may be a list; counts are then split evenly (the first
    ``n % len(sigma)`` entries get one extra point).
    """
    sig = np.atleast_1d(np.asarray(sigma, dtype=np.float64))
    counts = np.full(len(sig), n // len(sig))
    counts[: n % len(sig)] += 1
    parts = []
    for c, s in zip(counts, sig):
        p = sample_surface(mesh, int(c), rng)
        parts.append(p + s * rng.standard_normal(p.shape))
    return np.concatenate(parts) if parts else np.zeros((0, 3))


def expand_bbox(lo, hi, margin):
    lo, hi = np.asarray(lo, dtype=np.float64), np.asarray(hi, dtype=np.float64)
    pad = margin * (hi - lo)
    return lo - pad, hi + pad


def sample_uniform_bbox(bbox, n, rng, margin=0.0):
    lo, hi = expand_bbox(bbox[0], bbox[1], margin)
    if np.any(hi <= lo):
        raise ValueError("degenerate sampling box")
    return lo + rng.random((n, 3)) * (hi - lo)


def n_uniform(cfg):
    return int(round(cfg.n_total * cfg.uniform_fraction))


def sample_pool(mesh, bbox, cfg, rng):
    """Pool of ``n_total`` points: uniform-in-box block first, then the
    near-surface samples."""
    nu = n_uniform(cfg)
    uni = sample_uniform_bbox(bbox, nu, rng, cfg.bbox_margin)
    near = sample_surface_gaussian(mesh, cfg.n_total - nu, cfg.sigmas, rng)
    return np.concatenate([uni, near])


def _stream(seed, *keys):
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


def scene_pools(scene, cfg, seed):
    """Labelled point pools per entity, in scene coordinates."""
    cfg.validate()
    bbox = scene.joint_bounds()
    meshes = {"human": scene.human_mesh, "object": scene.object_mesh}
    pools = {}
    for code, ent in enumerate(ENTITIES):
        pts = sample_pool(meshes[ent], bbox, cfg, _stream(seed, scene.seed, code))
        pools[ent] = (pts, occupancy(meshes[ent], pts))
    return pools


def make_training_batch(scene, view_id, cfg, seed, frame, pools=None):
    """Per-entity random ``n_subset`` draw from the scene pool, recentered on ``frame``."""
    pools = pools or scene_pools(scene, cfg, seed)
    out = []
    for code, ent in enumerate(ENTITIES):
        pts, lab = pools[ent]
        idx = np.sort(_stream(seed, scene.seed, 1000 + view_id, code).choice(len(pts), cfg.n_subset, replace=False))
        out.append(recenter(PointBatch(pts[idx], lab[idx].copy(), ent, view_id), frame))
    return tuple(out)


# -- cache files ------------------------------------------------------------------

def write_points(path, batch, priors=None):
    """``HOPT`` cache: header, float32 xyz, u8 labels, optional float32 prior triples."""
    n = len(batch)
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<IB", n, ENTITIES.index(batch.entity)))
        fh.write(np.asarray(batch.positions, "<f4").tobytes())
        fh.write(np.asarray(batch.labels, np.uint8).tobytes())
        if priors is not None:
            fh.write(np.asarray(priors, "<f4").reshape(n, 3).tobytes())


def read_points(path):
    """(PointBatch, priors or None)."""
    raw = open(path, "rb").read()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a point cache")
    n, ent = struct.unpack_from("<IB", raw, 4)
    off = 9
    pos = np.frombuffer(raw, "<f4", 3 * n, off).reshape(n, 3).astype(np.float64)
    off += 12 * n
    lab = np.frombuffer(raw, np.uint8, n, off).copy()
    off += n
    pri = np.frombuffer(raw, "<f4", 3 * n, off).reshape(n, 3).copy() if len(raw) >= off + 12 * n and n else None
    return PointBatch(pos, lab, ENTITIES[ent]), pri
