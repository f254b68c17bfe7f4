"""Helpers shared by several test modules."""
import numpy as np

from hoir.oracles import brute_min_distance
from hoir.sampler import sample_surface
from hoir.surface import ScalarGrid

SPHERE_RADIUS = 0.8


def sphere_grid(resolution, radius=SPHERE_RADIUS, width=0.05):
    """Smooth occupancy of a ball on a cubic grid over [-1, 1]^3: a logistic
    ramp in the signed distance, exactly 0.5 on the sphere."""
    g = ScalarGrid.over_box([-1, -1, -1], [1, 1, 1], resolution, margin=0.0)
    r = np.linalg.norm(g.node_positions(), axis=1)
    g.values = (1.0 / (1.0 + np.exp(-(radius - r) / width))).reshape(g.values.shape)
    return g


def unit_sphere_points(n, rng):
    d = rng.standard_normal((n, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def chamfer_to_sphere(mesh, radius=SPHERE_RADIUS, n=300, seed=0):
    """Symmetric mean distance between a mesh and the analytic sphere.
    Mesh to sphere is closed-form; sphere to mesh is brute force."""
    rng = np.random.default_rng(seed)
    on_mesh = sample_surface(mesh, n, rng)
    to_sphere = np.abs(np.linalg.norm(on_mesh, axis=1) - radius).mean()
    to_mesh = brute_min_distance(mesh, radius * unit_sphere_points(n, rng)).mean()
    return 0.5 * (to_sphere + to_mesh)


# (number, title, passed, detail, seconds, budget) per acceptance criterion
ACCEPTANCE = []
