import numpy as np
import pytest
from skimage.measure import marching_cubes as sk_marching_cubes

from hoir.neural.model import build_model
from hoir.neural.tensor import no_grad
from hoir.pipeline.data import load_context, point_inputs
from hoir.surface import (ISO_LEVEL, ScalarGrid, closed_field, evaluate_field, marching_cubes,
                          reconstruction_grid)

from _shared import chamfer_to_sphere, sphere_grid


def _unique_rows(v, decimals=9):
    return np.unique(np.round(v, decimals), axis=0)


def test_grid_validation():
    with pytest.raises(ValueError):
        ScalarGrid(np.zeros((1, 4, 4)), np.zeros(3), 1.0)
    with pytest.raises(ValueError):
        ScalarGrid(np.zeros((4, 4, 4)), np.zeros(3), 0.0)


@pytest.mark.parametrize("value", [0.0, 0.5, 1.0])
def test_constant_grid_is_empty(backend, value):
    g = ScalarGrid(np.full((5, 6, 7), value), np.zeros(3), 0.1)
    assert marching_cubes(g, ISO_LEVEL).is_empty()


def test_halfspace_gives_a_plane(backend):
    g = ScalarGrid.over_box([0, 0, 0], [1, 1, 1], 11, margin=0.0)
    x = g.node_positions()[:, 0]
    g.values = (x < 0.43).astype(float).reshape(g.values.shape)
    m = marching_cubes(g)
    assert not m.is_empty()
    # step between nodes 0.4 and 0.5 crosses at the midpoint
    assert np.abs(m.vertices[:, 0] - 0.45).max() < 1e-9
    n = m.face_normals()
    assert np.allclose(n, [1, 0, 0], atol=1e-9)  # towards lower occupancy


def test_vertices_match_skimage(backend):
    g = sphere_grid(24)
    ours = marching_cubes(g)
    verts, _, _, _ = sk_marching_cubes(g.values, ISO_LEVEL, spacing=(g.spacing,) * 3)
    theirs = verts + g.origin
    a, b = _unique_rows(ours.vertices), _unique_rows(theirs)
    assert a.shape == b.shape
    assert np.abs(a - b).max() < 1e-7


def test_sphere_fidelity_at_64():
    g = sphere_grid(64)
    m = marching_cubes(g)
    assert m.watertight
    r = np.linalg.norm(m.vertices, axis=1)
    assert np.abs(r - 0.8).max() < 1.5 * g.spacing * np.sqrt(3)
    assert chamfer_to_sphere(m) < 2 * g.spacing


@pytest.mark.slow
def test_sphere_error_halves_with_resolution():
    coarse, fine = sphere_grid(64), sphere_grid(127)
    e64 = chamfer_to_sphere(marching_cubes(coarse))
    e128 = chamfer_to_sphere(marching_cubes(fine))
    assert fine.spacing == pytest.approx(coarse.spacing / 2)
    assert e64 / e128 >= 1.8


def test_no_degenerate_faces_and_valid_indices(backend, rng):
    g = ScalarGrid(rng.random((12, 10, 9)), np.zeros(3), 0.1)
    m = marching_cubes(g)
    assert m.faces.min() >= 0 and m.faces.max() < len(m.vertices)
    assert m.face_areas().min() > 1e-12


def test_backends_agree(rng):
    from hoir import accel
    g = ScalarGrid(rng.random((9, 8, 10)), np.zeros(3), 0.2)
    with accel.backend("numpy"):
        a = marching_cubes(g)
    with accel.backend("numba"):
        b = marching_cubes(g)
    np.testing.assert_array_equal(a.vertices, b.vertices)
    np.testing.assert_array_equal(a.faces, b.faces)


def test_closed_field_closes_a_boundary_blob():
    g = ScalarGrid(np.ones((6, 6, 6)), np.zeros(3), 0.1)
    assert marching_cubes(g).is_empty()
    m = marching_cubes(closed_field(g))
    assert m.watertight and m.volume() > 0
    assert g.values.min() == 1.0  # input untouched


@pytest.fixture(scope="module")
def view_ctx(tiny_dataset):
    return load_context(tiny_dataset / "scenes" / "0000", 0)


def test_zero_weights_give_half(view_ctx):
    model = build_model(seed=0)
    for _, p in model.named_parameters():
        p.data[...] = 0
    grid = reconstruction_grid(view_ctx, 6)
    f = evaluate_field(model, view_ctx, grid, "human")
    assert np.all(f.values == 0.5)


@pytest.mark.parametrize("entity", ["human", "object", "joint"])
def test_field_values_are_probabilities(view_ctx, entity):
    f = evaluate_field(build_model(seed=1), view_ctx, reconstruction_grid(view_ctx, 8), entity)
    assert np.all((f.values >= 0) & (f.values <= 1))


def test_batched_field_matches_single_points(view_ctx):
    model = build_model(seed=3)
    grid = reconstruction_grid(view_ctx, 16)
    batched = evaluate_field(model, view_ctx, grid, "human", chunk=1000).values.reshape(-1)
    nodes = grid.node_positions() + view_ctx.frame.center
    pick = np.random.default_rng(0).choice(len(nodes), 100, replace=False)
    size = view_ctx.images["I_f"].shape[1:]
    with no_grad():
        feats = model.encode(model.stack_inputs([view_ctx.images]))
        single = [model.predict(feats, 0, point_inputs(view_ctx, nodes[i:i + 1]), "h", size).data[0]
                  for i in pick]
    np.testing.assert_array_equal(np.asarray(single, np.float64), batched[pick])
