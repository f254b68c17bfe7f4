"""Shape metrics between a predicted and a ground-truth human-object mesh:
alignment by the human part, point-to-surface, Chamfer, IoU, normal
consistency and f-score."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .geometry.mesh import EmptyMeshError, MeshError, NotWatertightError
from .geometry.queries import closest_points, occupancy
from .surface import ScalarGrid

PAPER_SCALE = 100.0     # reported distances are in units of 1e-2
DEFAULT_SAMPLES = 10000
TAU_FRACTION = 0.01


@dataclass
class MetricReport:
    p2s: float
    cd: float
    iou: float
    normal: float
    fscore: float
    n_samples: int
    tau: float
    p2s_raw: float
    cd_raw: float

    def to_dict(self):
        return {k: (float(v) if isinstance(v, (float, np.floating)) else v) for k, v in asdict(self).items()}


def surface_centroid(mesh):
    """Area-weighted centroid of the surface."""
    a = mesh.face_areas()
    if not a.sum() > 0:
        raise EmptyMeshError("mesh has no surface area")
    return (mesh.triangles.mean(axis=1) * a[:, None]).sum(0) / a.sum()


def align(pred, gt_human, pred_human):
    """(scale, translation) mapping the prediction onto the ground truth:
    scale = ratio of human bbox diagonals, translation matching the human
    centroids after scaling."""
    for m in (pred, gt_human, pred_human):
        if m.is_empty():
            raise EmptyMeshError("cannot align an empty mesh")
    d_pred = pred_human.bbox_diagonal()
    if not d_pred > 0:
        raise MeshError("predicted human has a zero bbox diagonal")
    s = gt_human.bbox_diagonal() / d_pred
    t = surface_centroid(gt_human) - s * surface_centroid(pred_human)
    return s, t


def apply_alignment(mesh, s, t):
    return mesh.transformed(scale=s, translation=t)


def sample_with_normals(mesh, n, seed=0):
    if mesh.is_empty():
        raise EmptyMeshError("cannot sample an empty mesh")
    rng = np.random.default_rng(seed)
    a = mesh.face_areas()
    fi = rng.choice(len(a), size=n, p=a / a.sum())
    r1, r2 = rng.random(n), rng.random(n)
    s = np.sqrt(r1)
    t = mesh.triangles[fi]
    pts = (1 - s)[:, None] * t[:, 0] + (s * (1 - r2))[:, None] * t[:, 1] + (s * r2)[:, None] * t[:, 2]
    return pts, mesh.face_normals()[fi]


def _dist(src, dst, n, seed):
    pts, _ = sample_with_normals(src, n, seed)
    _, d, _ = closest_points(dst, pts)
    return d


def p2s(pred, gt, n_samples=DEFAULT_SAMPLES, seed=0):
    """Mean distance from area-uniform samples on ``pred`` to the ``gt`` surface."""
    return float(_dist(pred, gt, n_samples, seed).mean())


def chamfer(pred, gt, n_samples=DEFAULT_SAMPLES, seed=0):
    """Mean of the two directed point-to-surface distances."""
    return 0.5 * (p2s(pred, gt, n_samples, seed) + p2s(gt, pred, n_samples, seed))


def _normal_dir(src, dst, n, seed):
    pts, nrm = sample_with_normals(src, n, seed)
    _, _, fid = closest_points(dst, pts)
    cos = (nrm * dst.face_normals()[fid]).sum(1)
    return float(np.maximum(cos, 0.0).mean())


def normal_consistency(pred, gt, n_samples=DEFAULT_SAMPLES, seed=0):
    return 0.5 * (_normal_dir(pred, gt, n_samples, seed) + _normal_dir(gt, pred, n_samples, seed))


def fscore(pred, gt, tau, n_samples=DEFAULT_SAMPLES, seed=0):
    if not tau > 0:
        raise ValueError("f-score threshold must be positive")
    precision = float((_dist(pred, gt, n_samples, seed) < tau).mean())
    recall = float((_dist(gt, pred, n_samples, seed) < tau).mean())
    if precision + recall == 0:
        return 0.0
    return 100.0 * 2 * precision * recall / (precision + recall)


def iou(pred, gt, resolution=128):
    """Volumetric IoU from ray-parity occupancy at voxel centres of a shared grid."""
    for m in (pred, gt):
        if m.is_empty():
            raise EmptyMeshError("IoU of an empty mesh")
        if not m.watertight:
            raise NotWatertightError("IoU needs closed meshes")
    lo = np.minimum(pred.bounds()[0], gt.bounds()[0])
    hi = np.maximum(pred.bounds()[1], gt.bounds()[1])
    grid = ScalarGrid.over_box(lo, hi, resolution + 1, margin=0.01)
    n = np.array(grid.values.shape) - 1
    idx = np.stack(np.meshgrid(*[np.arange(k) for k in n], indexing="ij"), -1).reshape(-1, 3)
    centers = grid.origin + (idx + 0.5) * grid.spacing
    a = occupancy(pred, centers).astype(bool)
    b = occupancy(gt, centers).astype(bool)
    union = np.count_nonzero(a | b)
    return float(np.count_nonzero(a & b) / union) if union else 0.0


def compare(pred, gt, n_samples=DEFAULT_SAMPLES, tau=None, seed=0, iou_resolution=128,
            direction="pred_to_gt"):
    """Every metric of ``pred`` against ``gt`` as they stand (no alignment)."""
    if tau is None:
        tau = TAU_FRACTION * gt.bbox_diagonal()
    if direction == "pred_to_gt":
        d = p2s(pred, gt, n_samples, seed)
    elif direction == "gt_to_pred":
        d = p2s(gt, pred, n_samples, seed)
    else:
        raise ValueError(f"unknown p2s direction {direction!r}")
    cd = chamfer(pred, gt, n_samples, seed)
    return MetricReport(
        p2s=PAPER_SCALE * d, cd=PAPER_SCALE * cd,
        iou=iou(pred, gt, iou_resolution) if pred.watertight else float("nan"),
        normal=normal_consistency(pred, gt, n_samples, seed),
        fscore=fscore(pred, gt, tau, n_samples, seed),
        n_samples=int(n_samples), tau=float(tau), p2s_raw=d, cd_raw=cd)


def evaluate(pred, pred_human, gt, gt_human, **kw):
    """Align ``pred`` by its human part, then :func:`compare` it with ``gt``."""
    s, t = align(pred, gt_human, pred_human)
    return compare(apply_alignment(pred, s, t), gt, **kw)
