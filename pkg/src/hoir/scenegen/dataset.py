"""Synthetic dataset generation and on-disk layout.

    <root>/dataset.json
    <root>/scenes/<id>/scene.json
    <root>/scenes/<id>/meshes/{human,object,proxy}.obj
    <root>/scenes/<id>/views/<k>/{If,Ip,Ih,Io,Sn,depth}.pfm and {Ms,Mp,Mo,Mi}.png
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ..geometry.camera import PerspectiveCamera
from ..geometry.mesh import load_obj, save_obj
from ..geometry.raster import rasterize, read_pfm, write_pfm
from .compose import (HUMAN_ID, OBJECT_ID, NoContactError, RigidTransform, SceneSpec, ViewBundle,
                      ViewConfig, bbox_center, compose_scene, place_views, render_view)
from .figures import capsule_figure, random_object

IMAGES = {"If": "I_f", "Ip": "I_p", "Ih": "I_h", "Io": "I_o", "Sn": "S_N"}
MASKS = {"Ms": "M_s", "Mp": "M_p", "Mo": "M_o", "Mi": "M_i"}


@dataclass
class GenConfig:
    n_scenes: int = 8
    n_trans: int = 2
    n_views: int = 8
    image_size: int = 64

    def validate(self):
        if min(self.n_scenes, self.n_trans, self.n_views) < 1:
            raise ValueError("n_scenes, n_trans and n_views must be >= 1")
        if self.image_size < 8 or self.image_size % 4:
            raise ValueError("image_size must be a multiple of 4 and >= 8")


def scene_seeds(seed, n):
    """Independent integer seeds per scene derived from the master seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def generate_scene(seed, camera, n_trans, n_views, attempts=8):
    """Figure + object in contact, with its retained views."""
    fig_seed, obj_seed, place_seed = np.random.SeedSequence(seed).generate_state(3)
    human, proxy, _ = capsule_figure(int(fig_seed))
    kind, template = random_object(int(obj_seed))
    rng = np.random.default_rng(place_seed)
    c_h = bbox_center(human)
    for attempt in range(attempts):
        theta = rng.uniform(0, 2 * np.pi)
        lift = rng.uniform(-0.35, 0.35)
        start = c_h + 1.5 * np.array([np.cos(theta), lift, np.sin(theta)])
        obj = template.translated(start - bbox_center(template))
        try:
            scene = compose_scene(human, obj, int(rng.integers(2**31)), body_proxy=proxy)
            break
        except NoContactError:
            if attempt == attempts - 1:
                raise
    scene.seed = int(seed)
    views = place_views(scene, camera, n_trans, n_views)
    return scene, views, kind


def _save_mask(path, mask):
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8)).save(path)


def _load_mask(path):
    return np.asarray(Image.open(path)) > 127


def write_view(vdir, bundle):
    vdir = Path(vdir)
    vdir.mkdir(parents=True, exist_ok=True)
    for fname, attr in IMAGES.items():
        write_pfm(vdir / f"{fname}.pfm", getattr(bundle, attr))
    for fname, attr in MASKS.items():
        _save_mask(vdir / f"{fname}.png", getattr(bundle, attr))
    write_pfm(vdir / "depth.pfm", np.where(bundle.joint_depth.mask, bundle.joint_depth.depth, 0.0))


def write_scene(sdir, scene, views, kind=""):
    sdir = Path(sdir)
    (sdir / "meshes").mkdir(parents=True, exist_ok=True)
    save_obj(scene.human_mesh, sdir / "meshes" / "human.obj")
    save_obj(scene.object_mesh, sdir / "meshes" / "object.obj")
    save_obj(scene.body_proxy, sdir / "meshes" / "proxy.obj")
    meta = {
        "seed": scene.seed,
        "object_kind": kind,
        "object_pose": scene.object_pose.to_dict(),
        "translations": [list(map(float, t)) for t in scene.translations],
        "delta_pen": scene.delta_pen,
        "views": [v.to_dict() for v in views],
    }
    (sdir / "scene.json").write_text(json.dumps(meta, indent=1))
    # render from the reloaded meshes so every later stage sees identical inputs
    loaded = load_scene(sdir)[0]
    for k, v in enumerate(views):
        write_view(sdir / "views" / str(k), render_view(loaded, v.camera))


def load_scene(sdir):
    """(SceneSpec, [ViewConfig], metadata dict)."""
    sdir = Path(sdir)
    meta = json.loads((sdir / "scene.json").read_text())
    m = sdir / "meshes"
    scene = SceneSpec(load_obj(m / "human.obj"), load_obj(m / "object.obj"),
                      RigidTransform.from_dict(meta["object_pose"]), load_obj(m / "proxy.obj"),
                      [np.array(t) for t in meta["translations"]], int(meta["seed"]))
    return scene, [ViewConfig.from_dict(v) for v in meta["views"]], meta


def load_view(sdir, k, scene=None, camera=None):
    """Read one view back.  The proxy+object depth buffer is re-rasterised
    (the PFM copy lacks entity and face ids)."""
    sdir = Path(sdir)
    if scene is None or camera is None:
        scene, views, _ = load_scene(sdir)
        camera = views[k].camera
    vdir = sdir / "views" / str(k)
    imgs = {attr: read_pfm(vdir / f"{f}.pfm", channels=3 if f == "Sn" else 5) for f, attr in IMAGES.items()}
    masks = {attr: _load_mask(vdir / f"{f}.png") for f, attr in MASKS.items()}
    joint = rasterize(camera, [(scene.body_proxy, HUMAN_ID), (scene.object_mesh, OBJECT_ID)])
    return ViewBundle(joint_depth=joint, camera=camera, **imgs, **masks)


def generate_dataset(out, seed, cfg=None, log=None):
    cfg = cfg or GenConfig()
    cfg.validate()
    out = Path(out)
    camera = PerspectiveCamera.default(cfg.image_size)
    ids = []
    for i, s in enumerate(scene_seeds(seed, cfg.n_scenes)):
        scene, views, kind = generate_scene(s, camera, cfg.n_trans, cfg.n_views)
        sid = f"{i:04d}"
        write_scene(out / "scenes" / sid, scene, views, kind)
        ids.append(sid)
        if log:
            log(f"scene {sid}: {kind}, {len(views)} views")
    (out / "dataset.json").write_text(json.dumps({
        "seed": seed, "n_scenes": cfg.n_scenes, "n_trans": cfg.n_trans, "n_views": cfg.n_views,
        "image_size": cfg.image_size, "scenes": ids}, indent=1))
    return ids


def dataset_scenes(root):
    root = Path(root)
    meta = json.loads((root / "dataset.json").read_text())
    return [root / "scenes" / sid for sid in meta["scenes"]]
