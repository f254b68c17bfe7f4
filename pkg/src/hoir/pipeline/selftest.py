"""Built-in oracle checks behind ``hoir selftest``."""
from __future__ import annotations

import time

import numpy as np

GRAD_TOL = 1e-4


def _closest_points():
    from ..geometry.mesh import icosphere
    from ..geometry.queries import closest_points
    from ..oracles import brute_closest
    m = icosphere(2)
    p = np.random.default_rng(0).uniform(-2, 2, (300, 3))
    _, d, _ = closest_points(m, p)
    _, d_ref = brute_closest(m, p)
    return float(np.abs(d - d_ref).max()) < 1e-9, f"max |d - brute| = {np.abs(d - d_ref).max():.2e}"


def _occupancy():
    from ..geometry.mesh import l_shape
    from ..geometry.queries import occupancy
    from ..oracles import winding_inside
    m = l_shape()
    p = np.random.default_rng(1).uniform(-0.2, 1.2, (2000, 3))
    agree = float((occupancy(m, p) == winding_inside(m, p)).mean())
    return agree == 1.0, f"parity vs winding agreement {agree:.4f}"


def _marching_cubes():
    from ..metrics import p2s
    from ..surface import ScalarGrid, marching_cubes
    from ..geometry.mesh import icosphere
    g = ScalarGrid.over_box([-1, -1, -1], [1, 1, 1], 64, margin=0.1)
    x = g.node_positions()
    g.values = (1.0 - np.linalg.norm(x, axis=1)).reshape(g.values.shape)
    m = marching_cubes(g, 0.0)
    err = p2s(m, icosphere(5), 5000)
    return m.watertight and err < 2 * g.spacing, f"sphere surface error {err:.2e} (spacing {g.spacing:.3f})"


def _gradients():
    from ..neural.gradcheck import gradient_errors, micro_model, micro_views
    worst = max(gradient_errors(micro_model("full"), micro_views()).values())
    return worst < GRAD_TOL, f"worst relative gradient error {worst:.2e}"


CHECKS = [("closest points vs brute force", _closest_points, True),
          ("occupancy vs winding number", _occupancy, True),
          ("marching cubes on a sphere", _marching_cubes, True),
          ("backward pass vs finite differences", _gradients, False)]


def run_selftest(emit=print, quick=False):
    ok = True
    for name, fn, fast in CHECKS:
        if quick and not fast:
            emit(f"SKIP {name}")
            continue
        t = time.perf_counter()
        try:
            passed, detail = fn()
        except Exception as e:  # noqa: BLE001 - a crashing check is a failed check
            passed, detail = False, f"{type(e).__name__}: {e}"
        ok &= passed
        emit(f"{'PASS' if passed else 'FAIL'} {name}: {detail} [{time.perf_counter() - t:.1f}s]")
    return ok
