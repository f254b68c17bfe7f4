"""Wall-clock comparison of the numba kernels and their numpy twins.

    python benchmarks/bench_kernels.py [--repeat N]

Each kernel runs once untimed per backend (numba compiles on first call),
then ``--repeat`` timed runs; the table reports the best time and checks
both backends agree.
"""
import argparse
import time

import numpy as np

from hoir import accel
from hoir.geometry.camera import PerspectiveCamera
from hoir.geometry.mesh import icosphere
from hoir.geometry.queries import closest_points, ray_parity
from hoir.geometry.raster import rasterize
from hoir.neural._kernels import scatter_rows, scatter_rows_np
from hoir.surface import ScalarGrid, marching_cubes


def cases():
    rng = np.random.default_rng(0)
    mesh = icosphere(4)
    pts = rng.uniform(-1.5, 1.5, (20000, 3))
    cam = PerspectiveCamera.default(128)
    shifted = mesh.translated([0.0, 0.0, -3.0])      # default camera looks down -z
    g = ScalarGrid.over_box([-1, -1, -1], [1, 1, 1], 64)
    g.values = (1.0 - np.linalg.norm(g.node_positions(), axis=1)).reshape(g.values.shape)
    idx = rng.integers(0, 4096, (50000, 4))
    wts = rng.random((50000, 4))
    grad = rng.standard_normal((50000, 8))

    def scatter():
        out = np.zeros((4096, 8))
        (scatter_rows if accel.USE_NUMBA else scatter_rows_np)(out, idx, wts, grad)
        return out

    return {
        "closest_points (20k pts)": lambda: closest_points(mesh, pts)[1],
        "ray parity (20k pts)": lambda: ray_parity(mesh, pts),
        "rasterize 128x128": lambda: rasterize(cam, [(shifted, 1)]).depth,
        "marching cubes 64^3": lambda: marching_cubes(g, 0.0).vertices,
        "bilinear scatter (200k)": scatter,
    }


def bench(fn, repeat):
    fn()
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    print(f"{'kernel':<26} {'numba s':>9} {'numpy s':>9} {'speedup':>8}  agree")
    for name, fn in cases().items():
        with accel.backend("numba"):
            tn, a = bench(fn, args.repeat)
        with accel.backend("numpy"):
            tp, b = bench(fn, args.repeat)
        agree = np.array_equal(np.asarray(a), np.asarray(b)) or np.allclose(a, b, rtol=0, atol=1e-12)
        print(f"{name:<26} {tn:9.4f} {tp:9.4f} {tp / tn:8.1f}x  {agree}")


if __name__ == "__main__":
    main()
