"""Stage functions behind the CLI: training, reconstruction, evaluation and
the ablation matrix."""
from __future__ import annotations

import hashlib
import json
import math
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..geometry.mesh import concatenate, load_obj, save_obj
from ..metrics import align, apply_alignment, compare, evaluate
from ..neural.checkpoint import load_checkpoint, save_checkpoint
from ..neural.model import Model
from ..neural.train import Adam, train_step
from ..scenegen.dataset import dataset_scenes, load_scene
from ..surface import ScalarGrid, evaluate_field, extract, grid_inputs, reconstruction_grid
from .data import load_context, prepare_scene, split_views
from .inpaint import make_inpainter

ENTITIES = ("human", "object", "joint")


def _quiet(msg):
    pass


# -- data ---------------------------------------------------------------------------

def data_hash(samples):
    """SHA-256 over every array a list of training samples feeds the network."""
    h = hashlib.sha256()

    def add(a):
        a = np.ascontiguousarray(a)
        h.update(str(a.dtype).encode() + str(a.shape).encode())
        h.update(a.tobytes())

    for s in samples:
        for k in sorted(s.images):
            add(s.images[k])
        for q in "ho":
            p = s.points[q]
            for a in (p.uv, p.prior_h, p.prior_o, s.labels[q], s.union_labels[q]):
                add(a)
    return h.hexdigest()


def training_data(cfg, log=_quiet):
    """Training samples of every scene (all but the held-out view)."""
    inpaint = make_inpainter(cfg.inpainter)
    samples = []
    for sdir in dataset_scenes(cfg.dataset_dir):
        got = prepare_scene(sdir, cfg.sampler, cfg.training.seed, inpaint)
        log(f"{sdir.name}: {len(got)} training views")
        samples.extend(got)
    if not samples:
        raise RuntimeError("dataset has no training views")
    return samples


# -- training -----------------------------------------------------------------------

@dataclass
class Trained:
    """One row's trained networks: a single model, or one per entity."""
    models: dict                    # "joint" or "human"/"object" -> Model
    optimisers: dict
    history: dict = field(default_factory=dict)

    @property
    def union(self):
        return next(iter(self.models.values())).cfg.ablation.union


def train_model(cfg, model_cfg, samples, terms="ho", seed=None, log=_quiet):
    """Adam over batches drawn from a seeded shuffle of ``samples``."""
    seed = cfg.training.seed if seed is None else seed
    model = Model(model_cfg.validate(), seed)
    opt = Adam(model.named_parameters(), cfg.training.lr)
    rng = np.random.default_rng([seed, 11])
    order = []
    history = []
    for step in range(cfg.training.steps):
        batch = []
        while len(batch) < cfg.training.batch_views:
            if not order:
                order = list(rng.permutation(len(samples)))
            batch.append(samples[order.pop()])
        rec = train_step(model, opt, batch, step=step, terms=terms)
        history.append(rec.L)
        if step % 50 == 0 or step == cfg.training.steps - 1:
            log(f"step {step}: L={rec.L:.5f} L_h={rec.L_h:.5f} L_o={rec.L_o:.5f}")
    return model, opt, history


def train_variant(cfg, variant, samples, log=_quiet):
    model_cfg = cfg.model_config(variant.ablation)
    if not variant.separate:
        m, o, h = train_model(cfg, model_cfg, samples, log=log)
        return Trained({"joint": m}, {"joint": o}, {"joint": h})
    models, opts, hist = {}, {}, {}
    for k, (ent, terms) in enumerate((("human", "h"), ("object", "o"))):
        log(f"separate network for the {ent}")
        models[ent], opts[ent], hist[ent] = train_model(cfg, model_cfg, samples, terms,
                                                        cfg.training.seed + k, log)
    return Trained(models, opts, hist)


def checkpoint_paths(path, keys):
    """``model.hock`` for a single network, ``model_human.hock`` /
    ``model_object.hock`` next to it for per-entity networks."""
    path = Path(path)
    return {k: path if k == "joint" else path.with_name(f"{path.stem}_{k}{path.suffix}") for k in keys}


def save_trained(trained, path, extra=None):
    """Write the checkpoint(s) of ``trained`` at (or beside) ``path``."""
    paths = checkpoint_paths(path, trained.models)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    for key, m in trained.models.items():
        save_checkpoint(paths[key], m, trained.optimisers[key],
                        {"history": trained.history[key], **(extra or {})})
    return list(paths.values())


def load_trained(path):
    path = Path(path)
    keys = ("joint",) if path.is_file() else ("human", "object")
    models, opts, hist = {}, {}, {}
    for k, p in checkpoint_paths(path, keys).items():
        if not p.is_file():
            raise FileNotFoundError(f"no checkpoint at {p}")
        models[k], opts[k], extra = load_checkpoint(p)
        hist[k] = extra.get("history", [])
    return Trained(models, opts, hist)


# -- reconstruction -----------------------------------------------------------------

def reconstruct_trained(trained, ctx, grid, inputs):
    """(human, object, joint) meshes of one view in scene coordinates."""
    c = ctx.frame.center
    if "joint" in trained.models:
        m = trained.models["joint"]
        if m.cfg.ablation.union:
            j = extract(evaluate_field(m, ctx, grid, "joint", inputs=inputs), c)
            return j, j, j
        fh = evaluate_field(m, ctx, grid, "human", inputs=inputs)
        fo = evaluate_field(m, ctx, grid, "object", inputs=inputs)
    else:
        fh = evaluate_field(trained.models["human"], ctx, grid, "human", inputs=inputs)
        fo = evaluate_field(trained.models["object"], ctx, grid, "object", inputs=inputs)
    fj = ScalarGrid(np.maximum(fh.values, fo.values), grid.origin, grid.spacing)
    return extract(fh, c), extract(fo, c), extract(fj, c)


def held_out_contexts(cfg, inpaint=None):
    """(scene id, ViewContext) of the held-out view of every scene."""
    inpaint = inpaint or make_inpainter(cfg.inpainter)
    for sdir in dataset_scenes(cfg.dataset_dir):
        loaded = load_scene(sdir)
        k = split_views(len(loaded[1]))[1]
        if k is None:
            raise RuntimeError(f"{sdir}: needs at least two views for a held-out split")
        yield sdir.name, load_context(sdir, k, inpaint, loaded)


def reconstruct_all(cfg, trained, out_dir, contexts=None, log=_quiet):
    """Write ``<out_dir>/<scene>/{human,object,joint}.obj`` for every held-out view."""
    out_dir = Path(out_dir)
    contexts = contexts if contexts is not None else [(s, c, None) for s, c in held_out_contexts(cfg)]
    written = {}
    for sid, ctx, cached in contexts:
        grid, inputs = cached or _grid(cfg, ctx)
        meshes = reconstruct_trained(trained, ctx, grid, inputs)
        d = out_dir / sid
        d.mkdir(parents=True, exist_ok=True)
        for name, m in zip(ENTITIES, meshes):
            save_obj(m, d / f"{name}.obj")
        written[sid] = meshes
        log(f"{sid}: joint mesh with {meshes[2].n_faces} faces")
    return written


def reconstruct_view(trained, view_dir, resolution, prefix, inpaint=None):
    """Reconstruct one dataset view (``.../scenes/<id>/views/<k>``) and write
    ``<prefix>_human.obj``, ``<prefix>_object.obj`` and ``<prefix>_joint.obj``."""
    view_dir = Path(view_dir)
    if not (view_dir / "If.pfm").is_file() or view_dir.parent.name != "views":
        raise FileNotFoundError(f"{view_dir} is not a dataset view directory")
    ctx = load_context(view_dir.parent.parent, int(view_dir.name), inpaint or make_inpainter("oracle"))
    grid = reconstruction_grid(ctx, resolution)
    meshes = reconstruct_trained(trained, ctx, grid, grid_inputs(ctx, grid))
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, m in zip(ENTITIES, meshes):
        paths.append(prefix.with_name(f"{prefix.name}_{name}.obj"))
        save_obj(m, paths[-1])
    return meshes, paths


def _grid(cfg, ctx):
    grid = reconstruction_grid(ctx, cfg.grid_resolution)
    return grid, grid_inputs(ctx, grid)


# -- evaluation ---------------------------------------------------------------------

def _metric_kwargs(cfg):
    m = cfg.metrics
    return dict(n_samples=m.n_samples, tau=m.tau, iou_resolution=m.iou_resolution, direction=m.p2s_direction)


def evaluate_meshes(cfg, meshes, scene, union):
    """Metric reports of one scene.  Per-entity rows exist only for
    architectures with per-entity heads; union outputs are aligned by the
    whole joint mesh since no separate human part exists."""
    h, o, j = meshes
    gt_j = concatenate([scene.human_mesh, scene.object_mesh])
    kw = _metric_kwargs(cfg)
    if union:
        return {"joint": evaluate(j, j, gt_j, gt_j, **kw).to_dict()}
    out = {"joint": evaluate(j, h, gt_j, scene.human_mesh, **kw).to_dict(),
           "human": evaluate(h, h, scene.human_mesh, scene.human_mesh, **kw).to_dict()}
    # an entity head can stay below the iso level everywhere (e.g. no object
    # image and no prior); the joint row is still defined, so note and go on
    out["object"] = None if o.is_empty() else evaluate_object(o, h, scene, kw)
    out["empty"] = ["object"] if o.is_empty() else []
    return out


def evaluate_object(o, h, scene, kw):
    """Object metrics under the alignment fitted on the human part."""
    s, t = align(h, scene.human_mesh, h)
    return compare(apply_alignment(o, s, t), scene.object_mesh, **kw).to_dict()


def mean_report(per_scene, entity="joint"):
    rows = [r[entity] for r in per_scene.values() if r.get(entity)]
    if not rows:
        return None
    keys = [k for k in rows[0] if isinstance(rows[0][k], float)]
    return {k: float(np.mean([r[k] for r in rows])) for k in keys}


def evaluate_dir(cfg, recon_dir, union, log=_quiet):
    """Metrics for meshes previously written by :func:`reconstruct_all`."""
    per_scene = {}
    for sdir in dataset_scenes(cfg.dataset_dir):
        d = Path(recon_dir) / sdir.name
        meshes = tuple(load_obj(d / f"{e}.obj", watertight=None) for e in ENTITIES)
        per_scene[sdir.name] = evaluate_meshes(cfg, meshes, load_scene(sdir)[0], union)
        log(f"{sdir.name}: IoU {per_scene[sdir.name]['joint']['iou']:.4f}")
    return {"scenes": per_scene, "mean": {e: mean_report(per_scene, e) for e in ENTITIES}}


# -- ablation matrix ----------------------------------------------------------------

def run_ablation_matrix(cfg, variants=None, log=_quiet, out_dir=None):
    """Train and evaluate every variant on identical data; failures are
    recorded and the matrix continues.  Rows are ranked by joint IoU."""
    variants = variants if variants is not None else cfg.parsed_variants()
    samples = training_data(cfg, log)
    digest = data_hash(samples)
    contexts = [(sid, ctx, _grid(cfg, ctx)) for sid, ctx in held_out_contexts(cfg)]
    rows = []
    for v in variants:
        log(f"variant {v.name}: data sha256 {digest}")
        row = {"name": v.name, "ablation": vars(v.ablation).copy(), "separate": v.separate,
               "data_hash": digest, "error": None, "mean": None, "scenes": {}}
        try:
            trained = train_variant(cfg, v, samples, log)
            if out_dir is not None:
                save_trained(trained, Path(out_dir) / v.name / "model.hock", {"variant": v.name})
            for sid, ctx, (grid, inputs) in contexts:
                meshes = reconstruct_trained(trained, ctx, grid, inputs)
                row["scenes"][sid] = evaluate_meshes(cfg, meshes, ctx.scene, trained.union)
            row["mean"] = mean_report(row["scenes"], "joint")
            row["final_loss"] = float(np.mean([h[-1] for h in trained.history.values() if h] or [math.nan]))
            log(f"variant {v.name}: IoU {row['mean']['iou']:.4f}")
        except Exception as e:  # noqa: BLE001 - one bad row must not stop the matrix
            row["error"] = f"{type(e).__name__}: {e}"
            row["traceback"] = traceback.format_exc()
            log(f"variant {v.name} failed: {row['error']}")
        rows.append(row)
    return rank_rows(rows)


def rank_rows(rows):
    def key(r):
        iou = r["mean"]["iou"] if r["mean"] else -math.inf
        return (-iou if math.isfinite(iou) else math.inf, r["name"])
    return sorted(rows, key=key)


def format_table(rows):
    head = f"{'variant':<18} {'P2S':>8} {'CD':>8} {'IoU':>8} {'Normal':>8} {'fScore':>8}"
    lines = [head, "-" * len(head)]
    for r in rows:
        if r["mean"] is None:
            lines.append(f"{r['name']:<18} failed: {r['error']}")
            continue
        m = r["mean"]
        lines.append(f"{r['name']:<18} {m['p2s']:8.4f} {m['cd']:8.4f} {m['iou']:8.4f} "
                     f"{m['normal']:8.4f} {m['fscore']:8.2f}")
    return "\n".join(lines)


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True))
