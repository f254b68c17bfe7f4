import filecmp

import numpy as np
import pytest

from hoir.geometry import PerspectiveCamera, box, icosphere
from hoir.geometry.mesh import TriangleMesh, load_obj
from hoir.oracles import brute_min_distance, ray_cast_first_hit, winding_inside
from hoir.scenegen.compose import (NoViewsError, RigidTransform, SceneSpec, bbox_center,
                                   candidate_views, compose_scene, oracle_inpaint, place_views,
                                   render_view)
from hoir.scenegen.dataset import GenConfig, generate_dataset, generate_scene, load_scene, load_view
from hoir.scenegen.figures import capsule_figure, random_object


@pytest.fixture(scope="module")
def figure():
    human, proxy, _ = capsule_figure(5, resolution=48, proxy_resolution=32)
    return human, proxy


def _scene(human, obj, proxy=None, translations=()):
    return SceneSpec(human, obj, RigidTransform(np.eye(3), np.zeros(3)), proxy or human,
                     [np.asarray(t, float) for t in translations], 0)


def _bundles(root):
    for sdir in sorted((root / "scenes").iterdir()):
        scene, views, _ = load_scene(sdir)
        for k, v in enumerate(views):
            yield load_view(sdir, k, scene, v.camera)


def _box_distance(points, mesh):
    lo, hi = mesh.bounds()
    return np.linalg.norm(np.maximum(0, np.maximum(lo - points, points - hi)), axis=1)


def _min_distance(mesh, points, other, tol):
    """Brute-force distance from ``points`` to the faces of ``mesh`` that come
    within ``tol`` of the box of ``other`` (the rest cannot make a gap < tol)."""
    tri = mesh.triangles
    lo, hi = other.bounds()
    keep = np.all(tri.min(axis=1) <= hi + tol, axis=1) & np.all(tri.max(axis=1) >= lo - tol, axis=1)
    if not (keep.any() and len(points)):
        return np.inf
    return brute_min_distance(TriangleMesh(mesh.vertices, mesh.faces[keep]), points).min()


# -- figures and contact -----------------------------------------------------------

@pytest.mark.parametrize("seed", [0, 1, 2])
def test_figures_are_closed(seed):
    human, proxy, _ = capsule_figure(seed, resolution=64, proxy_resolution=48)
    assert human.watertight and proxy.watertight
    assert proxy.n_faces < human.n_faces
    assert human.volume() > 0


def test_spheres_come_to_tangency():
    human = icosphere(4)
    obj = icosphere(4, center=(5.0, 0.0, 0.0))
    scene = compose_scene(human, obj, seed=3)
    d = np.linalg.norm(bbox_center(scene.object_mesh) - bbox_center(human))
    assert abs(d - 2.0) <= scene.delta_pen


def test_box_does_not_penetrate_figure(figure):
    human, _ = figure
    obj = box((0.4, 0.3, 0.5), center=bbox_center(human) + np.array([1.5, 0.1, 0.0]))
    scene = compose_scene(human, obj, seed=4)
    assert not winding_inside(human, scene.object_mesh.vertices).any()
    assert not winding_inside(scene.object_mesh, human.vertices).any()


@pytest.mark.parametrize("seed", range(20))
def test_contact_gap_within_tolerance(figure, seed):
    human, _ = figure
    rng = np.random.default_rng(seed)
    _, template = random_object(seed)
    theta = rng.uniform(0, 2 * np.pi)
    start = bbox_center(human) + 1.5 * np.array([np.cos(theta), rng.uniform(-0.3, 0.3), np.sin(theta)])
    scene = compose_scene(human, template.translated(start - bbox_center(template)), seed)
    obj = scene.object_mesh
    tol = scene.delta_pen
    # a vertex farther than tol from the other mesh's box can neither be
    # inside it nor set a gap below tol, so the brute-force checks skip it
    ov = obj.vertices[_box_distance(obj.vertices, human) <= tol]
    hv = human.vertices[_box_distance(human.vertices, obj) <= tol]
    assert not winding_inside(human, ov).any()
    assert not winding_inside(obj, hv).any()
    gap = min(_min_distance(human, ov, obj, tol), _min_distance(obj, hv, human, tol))
    assert 0 <= gap <= scene.delta_pen


def test_compose_needs_closed_meshes():
    open_box = box()
    open_box.faces = open_box.faces[:-1]
    open_box.watertight = False
    with pytest.raises(ValueError):
        compose_scene(open_box, icosphere(2, center=(3, 0, 0)), 0)


# -- views ----------------------------------------------------------------------------

def _tabletop():
    human = box((0.3, 0.3, 0.3), center=(0.0, 0.5, 0.0))
    obj = icosphere(2, 0.3)
    return human, obj


def test_object_on_axis_keeps_every_view():
    human, obj = _tabletop()
    scene = _scene(human, obj, translations=[(0, 0, -5), (0.2, 0, -6)])
    kept = place_views(scene, PerspectiveCamera.default(32), 2, 6)
    assert len(kept) == 12


def test_object_out_of_frustum_raises():
    human, obj = _tabletop()
    scene = _scene(human, obj, translations=[(100, 0, -5)])
    with pytest.raises(NoViewsError):
        place_views(scene, PerspectiveCamera.default(32), 1, 4)
    with pytest.raises(ValueError):
        place_views(scene, PerspectiveCamera.default(32), 0, 4)


def test_retained_views_match_ray_cast(small_dataset):
    cam = PerspectiveCamera.default(64)
    for sdir in sorted((small_dataset / "scenes").iterdir()):
        scene, views, meta = load_scene(sdir)
        kept = {(v.translation_index, v.azimuth) for v in place_views(scene, cam, 2, 4)}
        assert kept == {(v.translation_index, v.azimuth) for v in views}
        for v in candidate_views(scene, cam, 2, 4):
            lo, hi = (np.floor(x) for x in np.percentile(
                np.stack(v.camera.project(scene.object_mesh.vertices, check=False)[:2], 1), [0, 100], axis=0))
            cols = np.arange(max(lo[0] - 1, 0), min(hi[0] + 2, 64))
            rows = np.arange(max(lo[1] - 1, 0), min(hi[1] + 2, 64))
            pix = np.stack(np.meshgrid(cols, rows), -1).reshape(-1, 2)
            hit = ray_cast_first_hit(v.camera, [scene.human_mesh, scene.object_mesh], pix)
            assert ((v.translation_index, v.azimuth) in kept) == bool((hit == 1).any())


# -- rendering and masks ------------------------------------------------------------------

def test_no_occlusion_leaves_nothing_to_inpaint():
    human = box((0.4, 0.8, 0.3), center=(-0.6, 0, 0))
    obj = box((0.3, 0.3, 0.3), center=(0.6, 0, 0))
    cam = PerspectiveCamera.default(48)
    cam.translation = np.array([0.0, 0.0, 4.0])
    b = render_view(_scene(human, obj), cam)
    assert b.M_s.any() and b.M_o.any()
    assert not b.M_i.any()
    np.testing.assert_array_equal(b.I_p[:, b.M_s], b.I_h[:, b.M_s])
    np.testing.assert_array_equal(oracle_inpaint(b), b.I_p)


def test_covering_object_hides_the_whole_human():
    human = box((0.3, 0.3, 0.3))
    obj = box((2.0, 2.0, 0.2), center=(0, 0, 1.0))
    cam = PerspectiveCamera.default(48)
    cam.translation = np.array([0.0, 0.0, 4.0])
    b = render_view(_scene(human, obj), cam)
    assert b.M_s.any()
    assert not b.M_p.any()
    np.testing.assert_array_equal(b.M_i, b.M_s)


def test_mask_partition_on_every_view(tiny_dataset, small_dataset):
    n = 0
    for root in (tiny_dataset, small_dataset):
        for b in _bundles(root):
            assert not (b.M_i & b.M_p).any()
            np.testing.assert_array_equal(b.M_i | b.M_p, b.M_s)
            assert b.M_s.sum() == b.M_p.sum() + b.M_i.sum()
            assert not (b.M_p & ~b.M_s).any()
            assert np.all(b.I_p[:, ~b.M_p] == 0)
            assert {x.shape[-2:] for x in (b.I_f, b.I_p, b.I_h, b.I_o, b.S_N, b.M_o)} == {b.M_s.shape}
            n += 1
    assert n >= 10


def test_oracle_inpaint_returns_full_body(small_dataset):
    for b in _bundles(small_dataset):
        out = oracle_inpaint(b)
        np.testing.assert_array_equal(out, b.I_h)
        np.testing.assert_array_equal(out[:, b.M_i], b.I_h[:, b.M_i])


def test_channels(small_dataset):
    b = next(_bundles(small_dataset))
    assert b.I_f.shape[0] == 5 and b.S_N.shape[0] == 3
    assert set(np.unique(b.I_f[0])) <= {0.0, 1.0}
    n = np.linalg.norm(b.I_f[2:, b.I_f[0] > 0], axis=0)
    np.testing.assert_allclose(n, 1.0, atol=1e-5)
    np.testing.assert_array_equal(b.S_N, b.I_h[2:])


# -- dataset files -----------------------------------------------------------------------

def test_saved_views_match_fresh_renders(tiny_dataset):
    sdir = tiny_dataset / "scenes" / "0000"
    scene, views, _ = load_scene(sdir)
    for k, v in enumerate(views):
        fresh = render_view(scene, v.camera)
        saved = load_view(sdir, k, scene, v.camera)
        for name in ("I_f", "I_p", "I_h", "I_o", "S_N", "M_s", "M_p", "M_o", "M_i"):
            np.testing.assert_array_equal(getattr(saved, name), getattr(fresh, name), err_msg=name)


def test_generation_is_deterministic(tmp_path):
    cfg = GenConfig(n_scenes=1, n_trans=1, n_views=2, image_size=16)
    generate_dataset(tmp_path / "a", 11, cfg)
    generate_dataset(tmp_path / "b", 11, cfg)
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert files
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", [str(f) for f in files],
                                               shallow=False)
    assert not mismatch and not errors


def test_generate_scene_is_seed_stable():
    cam = PerspectiveCamera.default(16)
    a = generate_scene(21, cam, 1, 2)
    b = generate_scene(21, cam, 1, 2)
    np.testing.assert_array_equal(a[0].object_mesh.vertices, b[0].object_mesh.vertices)
    np.testing.assert_array_equal(a[0].human_mesh.faces, b[0].human_mesh.faces)
    assert [v.azimuth for v in a[1]] == [v.azimuth for v in b[1]]


def test_scene_meshes_round_trip(tiny_dataset):
    sdir = tiny_dataset / "scenes" / "0000"
    scene, _, meta = load_scene(sdir)
    assert scene.human_mesh.watertight and scene.object_mesh.watertight
    again = load_obj(sdir / "meshes" / "object.obj")
    np.testing.assert_array_equal(again.vertices, scene.object_mesh.vertices)
    assert meta["delta_pen"] == pytest.approx(1e-3 * scene.human_mesh.bbox_diagonal())


@pytest.mark.parametrize("bad", [dict(n_scenes=0), dict(n_views=0), dict(image_size=30), dict(image_size=4)])
def test_gen_config_validation(bad):
    with pytest.raises(ValueError):
        GenConfig(**bad).validate()
