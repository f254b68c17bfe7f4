"""Finite-difference check of the hand-written backward passes on a tiny
float64 model."""
from __future__ import annotations

import numpy as np

from .model import AblationConfig, EncoderConfig, FusionConfig, HeadConfig, PointInputs, build_model, loss
from .tensor import no_grad
from .train import ViewSample, forward_batch

STEP = 1e-4
# a block whose true gradient is zero (e.g. attention key bias, which
# softmax ignores) would otherwise compare roundoff against roundoff
NORM_FLOOR = 1e-8


def micro_model(architecture="full", seed=0, **flags):
    enc = EncoderConfig(stacks=1, out_channels=4, downsample=2, hidden=3, depth=1)
    return build_model(AblationConfig(architecture, **flags), enc, FusionConfig(1, 7),
                       HeadConfig((7, 6, 5, 4, 3, 1)), seed=seed, dtype=np.float64, prior_scale=(1, 1, 1))


def micro_views(seed=0, n_views=2, n_points=6, size=8):
    rng = np.random.default_rng(seed)
    views = []
    for _ in range(n_views):
        imgs = {k: rng.standard_normal((c, size, size)) for k, c in (("I_f", 5), ("I_h", 5), ("I_o", 5), ("S_N", 3))}
        pts = {q: PointInputs(rng.uniform(-1, size + 1, (n_points, 2)), rng.standard_normal((n_points, 3)),
                              rng.standard_normal((n_points, 3))) for q in "ho"}
        lab = {q: (rng.random(n_points) < 0.5).astype(np.float64) for q in "ho"}
        uni = {q: np.maximum(lab[q], rng.random(n_points) < 0.5) for q in "ho"}
        views.append(ViewSample(imgs, pts, lab, uni))
    return views


def _objective(model, views):
    out = forward_batch(model, views)
    return loss(out["h"][0], out["h"][1], out["o"][0], out["o"][1])[0]


def gradient_errors(model, views, h=STEP):
    """Per-parameter-block relative error ||analytic - numeric|| / max(norms, floor)."""
    model.zero_grad()
    _objective(model, views).backward()
    errors = {}
    for name, p in model.named_parameters():
        ga = p.grad if p.grad is not None else np.zeros_like(p.data)
        gn = np.zeros_like(p.data)
        flat, gflat = p.data.reshape(-1), gn.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            with no_grad():
                lp = float(_objective(model, views).data)
            flat[i] = old - h
            with no_grad():
                lm = float(_objective(model, views).data)
            flat[i] = old
            gflat[i] = (lp - lm) / (2 * h)
        den = max(np.linalg.norm(ga), np.linalg.norm(gn), NORM_FLOOR)
        errors[name] = float(np.linalg.norm(ga - gn) / den)
    return errors
