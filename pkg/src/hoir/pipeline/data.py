"""Turns dataset views into network inputs: images, projected query points,
pose priors and occupancy labels."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..geometry.queries import occupancy
from ..geometry.raster import vis_tolerance
from ..neural.model import PointInputs
from ..neural.train import ViewSample
from ..priors import AnchorFrame, anchor_frame, pose_prior, scene_diagonal
from ..sampler import make_training_batch, scene_pools
from ..scenegen.compose import SceneSpec, ViewBundle, oracle_inpaint
from ..scenegen.dataset import load_scene, load_view


@dataclass
class ViewContext:
    scene: SceneSpec
    bundle: ViewBundle
    frame: AnchorFrame
    images: dict
    view_id: int
    scene_dir: Path

    @property
    def camera(self):
        return self.bundle.camera

    @property
    def eps(self):
        return vis_tolerance(scene_diagonal(self.scene))


def network_images(bundle, inpaint=oracle_inpaint):
    return {"I_f": bundle.I_f, "I_h": inpaint(bundle), "I_o": bundle.I_o, "S_N": bundle.S_N}


def load_context(scene_dir, k, inpaint=oracle_inpaint, loaded=None):
    """``loaded`` may carry the (scene, views, meta) tuple to skip re-reading meshes."""
    scene, views, _ = loaded or load_scene(scene_dir)
    bundle = load_view(scene_dir, k, scene, views[k].camera)
    frame = anchor_frame(scene.body_proxy, bundle.camera)
    return ViewContext(scene, bundle, frame, network_images(bundle, inpaint), k, Path(scene_dir))


def point_inputs(ctx, world):
    """Pixel coordinates plus human and object priors for scene-space points."""
    cam = ctx.camera
    u, v, _ = cam.project(world, check=False)
    ph = pose_prior(world, ctx.scene.body_proxy, ctx.bundle.joint_depth, cam, ctx.frame, ctx.eps).as_array()
    po = pose_prior(world, ctx.scene.object_mesh, ctx.bundle.joint_depth, cam, ctx.frame, ctx.eps).as_array()
    return PointInputs(np.stack([u, v], 1), ph, po)


def training_sample(ctx, sampler_cfg, seed, pools=None):
    pools = pools or scene_pools(ctx.scene, sampler_cfg, seed)
    bh, bo = make_training_batch(ctx.scene, ctx.view_id, sampler_cfg, seed, ctx.frame, pools)
    points, labels, union = {}, {}, {}
    meshes = {"h": ctx.scene.human_mesh, "o": ctx.scene.object_mesh}
    for q, b in (("h", bh), ("o", bo)):
        w = b.world()
        points[q] = point_inputs(ctx, w)
        labels[q] = b.labels.astype(np.float64)
        other = meshes["o" if q == "h" else "h"]
        union[q] = np.maximum(b.labels, occupancy(other, w)).astype(np.float64)
    return ViewSample(ctx.images, points, labels, union)


def split_views(n_views):
    """Training view ids and the held-out (last) view id."""
    if n_views < 2:
        return list(range(n_views)), None
    return list(range(n_views - 1)), n_views - 1


def prepare_scene(scene_dir, sampler_cfg, seed, inpaint=oracle_inpaint, view_ids=None):
    loaded = load_scene(scene_dir)
    ids = split_views(len(loaded[1]))[0] if view_ids is None else view_ids
    pools = scene_pools(loaded[0], sampler_cfg, seed)
    return [training_sample(load_context(scene_dir, k, inpaint, loaded), sampler_cfg, seed, pools) for k in ids]
