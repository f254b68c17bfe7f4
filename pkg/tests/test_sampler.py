import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hoir.geometry import box, icosphere
from hoir.geometry.mesh import MeshError, TriangleMesh
from hoir.oracles import brute_min_distance, winding_inside
from hoir.priors import AnchorFrame
from hoir.sampler import (MAGIC, PointBatch, SamplerConfig, make_training_batch, n_uniform, read_points,
                          sample_pool, sample_surface, sample_surface_gaussian, sample_uniform_bbox,
                          scene_pools, write_points)
from hoir.scenegen.dataset import load_scene

CUBE = (np.zeros(3), np.ones(3))


@pytest.fixture(scope="module")
def scene(tiny_dataset):
    return load_scene(tiny_dataset / "scenes" / "0000")[0]


def test_tiny_sigma_stays_on_surface(rng):
    m = icosphere(2)
    p = sample_surface_gaussian(m, 500, 1e-12, rng)
    assert brute_min_distance(m, p).max() < 1e-6


def test_gaussian_shell_statistics(rng):
    sigma = 0.06
    p = sample_surface_gaussian(icosphere(4), 50000, sigma, rng)
    # the icosphere is within 1e-3 of the unit sphere, far below the bounds
    mean_abs = np.abs(np.linalg.norm(p, axis=1) - 1.0).mean()
    assert 0.6 * sigma <= mean_abs <= 1.0 * sigma
    inside = winding_inside(icosphere(4), p[:2000]).mean()
    assert 0.40 <= inside <= 0.60


def test_sigma_list_splits_counts_evenly(rng):
    m = icosphere(2)
    p = sample_surface_gaussian(m, 10, [1e-12, 1.0, 1.0], rng)
    assert len(p) == 10
    # the first four (one extra for the first sigma) hug the surface
    assert brute_min_distance(m, p[:4]).max() < 1e-6


def test_zero_area_mesh_is_rejected(rng):
    flat = TriangleMesh(np.zeros((3, 3)), np.array([[0, 1, 2]]))
    with pytest.raises(MeshError):
        sample_surface(flat, 10, rng)


def test_uniform_box_statistics(rng):
    p = sample_uniform_bbox(CUBE, 10000, rng)
    assert np.all((p >= 0) & (p <= 1))
    assert np.all(np.abs(p.mean(axis=0) - 0.5) < 0.02)


@settings(max_examples=25, deadline=None)
@given(margin=st.floats(0.0, 0.5), seed=st.integers(0, 2**31))
def test_uniform_points_stay_in_expanded_box(margin, seed):
    lo, hi = np.array([-1.0, 0.0, 2.0]), np.array([1.0, 0.5, 3.0])
    p = sample_uniform_bbox((lo, hi), 500, np.random.default_rng(seed), margin)
    pad = margin * (hi - lo)
    assert np.all(p >= lo - pad - 1e-12) and np.all(p <= hi + pad + 1e-12)


def test_degenerate_box_is_rejected(rng):
    with pytest.raises(ValueError):
        sample_uniform_bbox((np.zeros(3), np.array([1.0, 0.0, 1.0])), 5, rng)


def test_inside_fraction_matches_volume(rng):
    m = icosphere(4)
    lo, hi = np.full(3, -1.0), np.full(3, 1.0)
    p = sample_uniform_bbox((lo, hi), 4000, rng)
    frac = winding_inside(m, p).mean()
    assert abs(frac - m.volume() / 8.0) < 0.02


def test_pool_composition(rng):
    cfg = SamplerConfig(n_total=1600, n_subset=100, bbox_margin=0.0)
    m = icosphere(2)
    pool = sample_pool(m, CUBE, cfg, rng)
    nu = n_uniform(cfg)
    assert len(pool) == 1600 and nu == 100
    assert abs(nu / cfg.n_total - cfg.uniform_fraction) <= 1 / cfg.n_total
    assert np.all((pool[:nu] >= 0) & (pool[:nu] <= 1))


def test_batch_sizes_and_labels(scene):
    cfg = SamplerConfig(n_total=1000, n_subset=100)
    frame = AnchorFrame(scene.body_proxy.centroid(), 3.0)
    bh, bo = make_training_batch(scene, 0, cfg, seed=5, frame=frame)
    assert (len(bh), len(bo)) == (100, 100)
    assert (bh.entity, bo.entity) == ("human", "object")
    np.testing.assert_array_equal(bh.labels, winding_inside(scene.human_mesh, bh.world()))
    np.testing.assert_array_equal(bo.labels, winding_inside(scene.object_mesh, bo.world()))


def test_labels_agree_with_winding_on_1k_points(scene):
    cfg = SamplerConfig(n_total=2000, n_subset=1000)
    pools = scene_pools(scene, cfg, seed=2)
    for name, mesh in (("human", scene.human_mesh), ("object", scene.object_mesh)):
        pts, lab = pools[name]
        sel = np.random.default_rng(0).choice(len(pts), 1000, replace=False)
        assert (lab[sel] == winding_inside(mesh, pts[sel])).mean() == 1.0


def test_points_stay_inside_sampling_box(scene):
    cfg = SamplerConfig(n_total=2000, n_subset=10)
    pts, _ = scene_pools(scene, cfg, seed=0)["human"]
    lo, hi = scene.joint_bounds()
    pad = cfg.bbox_margin * (hi - lo)
    uni = pts[:n_uniform(cfg)]
    assert np.all(uni >= lo - pad) and np.all(uni <= hi + pad)


def test_batches_are_deterministic(scene):
    cfg = SamplerConfig(n_total=1000, n_subset=100)
    frame = AnchorFrame(np.zeros(3), 3.0)
    a = make_training_batch(scene, 1, cfg, 9, frame)
    b = make_training_batch(scene, 1, cfg, 9, frame)
    c = make_training_batch(scene, 2, cfg, 9, frame)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.positions, y.positions)
        np.testing.assert_array_equal(x.labels, y.labels)
    assert not np.array_equal(a[0].positions, c[0].positions)


def test_recentred_batches_keep_scene_coordinates(scene):
    cfg = SamplerConfig(n_total=1000, n_subset=50)
    frame = AnchorFrame(np.array([0.3, -0.2, 0.1]), 3.0)
    pools = scene_pools(scene, cfg, 1)
    bh, _ = make_training_batch(scene, 0, cfg, 1, frame, pools)
    pts, _ = pools["human"]
    assert all(any(np.array_equal(w, q) for q in pts) for w in bh.world()[:5])
    np.testing.assert_allclose(bh.positions + frame.center, bh.world(), atol=1e-12)


@pytest.mark.parametrize("bad", [dict(n_subset=0), dict(n_total=10, n_subset=11), dict(sigmas=()),
                                 dict(sigmas=(0.1, 0.0)), dict(uniform_fraction=1.5), dict(bbox_margin=-0.1)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        SamplerConfig(**bad).validate()


def test_point_cache_round_trip(tmp_path, rng):
    b = PointBatch(rng.random((7, 3)), rng.integers(0, 2, 7).astype(np.uint8), "object")
    pri = rng.random((7, 3))
    write_points(tmp_path / "a.hopt", b)
    write_points(tmp_path / "b.hopt", b, pri)
    raw = (tmp_path / "a.hopt").read_bytes()
    assert raw[:4] == MAGIC and struct.unpack_from("<IB", raw, 4) == (7, 1)
    assert len(raw) == 4 + 5 + 7 * 12 + 7
    got, none = read_points(tmp_path / "a.hopt")
    assert none is None and got.entity == "object"
    np.testing.assert_array_equal(got.positions, b.positions.astype(np.float32))
    np.testing.assert_array_equal(got.labels, b.labels)
    _, got_pri = read_points(tmp_path / "b.hopt")
    np.testing.assert_array_equal(got_pri, pri.astype(np.float32))


def test_bad_cache_magic(tmp_path):
    (tmp_path / "x.hopt").write_bytes(b"NOPE" + bytes(10))
    with pytest.raises(ValueError):
        read_points(tmp_path / "x.hopt")


def test_box_labels_match_winding(rng):
    m = box()
    p = rng.uniform(-0.8, 0.8, (1000, 3))
    b = PointBatch(p, winding_inside(m, p), "object")
    from hoir.geometry.queries import occupancy
    np.testing.assert_array_equal(occupancy(m, b.positions), b.labels)
