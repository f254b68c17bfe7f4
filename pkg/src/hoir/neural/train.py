"""Adam optimiser and the single training step."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .model import loss


class Adam:
    def __init__(self, named_params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(named_params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in self.params}
        self.v = {n: np.zeros_like(p.data) for n, p in self.params}

    def step(self, lr=None):
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for n, p in self.params:
            g = p.grad
            if g is None:
                continue
            dt = p.data.dtype.type
            m, v = self.m[n], self.v[n]
            m *= dt(self.b1)
            m += dt(1 - self.b1) * g
            v *= dt(self.b2)
            v += dt(1 - self.b2) * g * g
            if lr:
                p.data -= dt(lr) * (m / dt(c1)) / (np.sqrt(v / dt(c2)) + dt(self.eps))


@dataclass
class ViewSample:
    """Everything one training view contributes to a step."""
    images: dict            # name -> (C, H, W)
    points: dict            # "h"/"o" -> PointInputs
    labels: dict            # "h"/"o" -> (N,) own-entity occupancy
    union_labels: dict      # "h"/"o" -> (N,) human-or-object occupancy

    @property
    def image_size(self):
        return next(iter(self.images.values())).shape[1:]


@dataclass
class StepRecord:
    step: int
    L: float
    L_h: float
    L_o: float


def forward_batch(model, views):
    """Predictions and labels concatenated over the views of a batch."""
    feats = model.encode(model.stack_inputs([v.images for v in views]))
    preds = {"h": [], "o": []}
    labels = {"h": [], "o": []}
    for b, v in enumerate(views):
        for q in "ho":
            preds[q].append(model.predict(feats, b, v.points[q], q, v.image_size))
            labels[q].append((v.union_labels if model.cfg.ablation.union else v.labels)[q])
    out = {}
    for q in "ho":
        p = preds[q][0] if len(preds[q]) == 1 else T.concat(preds[q], axis=0)
        out[q] = (p, np.concatenate(labels[q]))
    return out


def train_step(model, opt, views, lr=None, step=0, terms="ho"):
    """One Adam step on the batch ``views``.  ``terms`` picks which set losses
    drive the update ("h", "o" or both); the record always reports both."""
    if not terms or set(terms) - set("ho"):
        raise ValueError(f"terms must be a non-empty subset of 'ho', got {terms!r}")
    model.zero_grad()
    out = forward_batch(model, views)
    L, L_h, L_o = loss(out["h"][0], out["h"][1], out["o"][0], out["o"][1])
    if set(terms) != {"h", "o"}:
        L = L_h if terms == "h" else L_o
    val = float(L.data)
    if not np.isfinite(val):
        raise FloatingPointError(f"non-finite loss at step {step}: L_h={float(L_h.data)} L_o={float(L_o.data)}")
    L.backward()
    opt.step(lr)
    return StepRecord(step, val, float(L_h.data), float(L_o.data))
