import numpy as np
import pytest

from hoir.geometry import PerspectiveCamera, box, icosphere
from hoir.geometry.camera import BehindCameraError
from hoir.geometry.queries import occupancy
from hoir.geometry.raster import rasterize
from hoir.oracles import brute_closest, ray_cast_visible, winding_inside
from hoir.pipeline.data import load_context
from hoir.priors import AnchorFrame, anchor_frame, pose_prior, recenter
from hoir.sampler import PointBatch, sample_surface_gaussian

CAM = PerspectiveCamera.default(64)


def test_anchor_depth_on_axis():
    proxy = icosphere(3, 0.5, center=(0, 0, -3))
    f = anchor_frame(proxy, CAM)
    assert f.z_c == pytest.approx(3.0, abs=1e-12)


def test_anchor_depth_follows_view_axis_shift():
    proxy = icosphere(3, 0.5, center=(0.2, 0.1, -3))
    a = anchor_frame(proxy, CAM)
    b = anchor_frame(proxy.translated((0, 0, -0.75)), CAM)
    assert b.z_c - a.z_c == pytest.approx(0.75, abs=1e-12)


def test_anchor_centre_is_vertex_mean(rng):
    proxy = box((0.3, 0.9, 0.2), center=(0.1, 0.0, -4)).transformed(translation=rng.normal(size=3) * 0.1)
    f = anchor_frame(proxy, CAM)
    assert np.abs(f.center - proxy.vertices.sum(axis=0) / len(proxy.vertices)).max() < 1e-9


def test_anchor_behind_camera():
    with pytest.raises(BehindCameraError):
        anchor_frame(icosphere(2, center=(0, 0, 3)), CAM)


@pytest.fixture(scope="module")
def occluded_setup():
    """A body behind a plate that hides its middle."""
    body = box((0.6, 1.2, 0.4), center=(0, 0, -4))
    plate = box((0.4, 0.4, 0.05), center=(0, 0, -3))
    buf = rasterize(CAM, [(body, 1), (plate, 2)])
    return body, plate, buf, anchor_frame(body, CAM)


def test_prior_trivial_values(occluded_setup):
    body, _, buf, frame = occluded_setup
    p = pose_prior(frame.center, body, buf, CAM, frame)
    assert p.z == pytest.approx(0.0, abs=1e-12)
    on = pose_prior(body.vertices, body, buf, CAM, frame)
    assert np.abs(on.d).max() < 1e-9
    assert set(np.unique(on.v)) <= {0.0, 1.0}


def test_distance_sign_and_magnitude(occluded_setup, rng):
    body, _, buf, frame = occluded_setup
    x = sample_surface_gaussian(body, 1000, 0.1, rng)
    p = pose_prior(x, body, buf, CAM, frame)
    _, d_ref = brute_closest(body, x)
    np.testing.assert_allclose(np.abs(p.d), d_ref, atol=1e-9)
    inside = winding_inside(body, x).astype(bool)
    assert np.all(p.d[inside] <= 0) and np.all(p.d[~inside] >= 0)
    np.testing.assert_allclose(p.z, CAM.depth(x) - frame.z_c, atol=1e-12)


def test_hidden_points_behind_the_plate(occluded_setup):
    body, _, buf, frame = occluded_setup
    front_centre = np.array([[0.0, 0.0, -3.79]])   # closest body point is on the face behind the plate
    edge = np.array([[0.0, 0.58, -3.79]])          # near the top, outside the plate's shadow
    assert pose_prior(front_centre, body, buf, CAM, frame).v[0] == 0.0
    assert pose_prior(edge, body, buf, CAM, frame).v[0] == 1.0


def test_visibility_matches_ray_cast(tiny_dataset, rng):
    ctx = load_context(tiny_dataset / "scenes" / "0000", 0)
    proxy, obj = ctx.scene.body_proxy, ctx.scene.object_mesh
    x = sample_surface_gaussian(proxy, 1000, 0.03, rng)
    p = pose_prior(x, proxy, ctx.bundle.joint_depth, ctx.camera, ctx.frame, ctx.eps)
    cp, _ = brute_closest(proxy, x)
    ref = ray_cast_visible(cp, ctx.camera, [proxy, obj], ctx.eps)
    assert (p.v == ref).mean() >= 0.99
    assert 0 < p.v.mean() < 1


def test_removing_the_object_never_hides_points(tiny_dataset, rng):
    ctx = load_context(tiny_dataset / "scenes" / "0000", 1)
    proxy = ctx.scene.body_proxy
    alone = rasterize(ctx.camera, [(proxy, 1)])
    x = sample_surface_gaussian(proxy, 1000, 0.05, rng)
    with_obj = pose_prior(x, proxy, ctx.bundle.joint_depth, ctx.camera, ctx.frame, ctx.eps).v
    without = pose_prior(x, proxy, alone, ctx.camera, ctx.frame, ctx.eps).v
    assert np.all(without >= with_obj)


def test_relative_depth_is_translation_equivariant(occluded_setup, rng):
    body, plate, _, frame = occluded_setup
    x = rng.uniform(-0.5, 0.5, (200, 3)) + [0, 0, -4]
    t = np.array([0, 0, -1.5])
    moved = body.translated(t)
    buf = rasterize(CAM, [(moved, 1), (plate.translated(t), 2)])
    z0 = pose_prior(x, body, rasterize(CAM, [(body, 1)]), CAM, frame).z
    z1 = pose_prior(x + t, moved, buf, CAM, anchor_frame(moved, CAM)).z
    np.testing.assert_allclose(z0, z1, atol=1e-12)


def test_recenter_round_trip(rng):
    p = rng.uniform(-2, 2, (1000, 3))
    m = icosphere(3)
    b = PointBatch(p, occupancy(m, p), "human")
    same = recenter(b, AnchorFrame(np.zeros(3), 1.0))
    np.testing.assert_array_equal(same.positions, p)
    c = rng.normal(size=3)
    r = recenter(b, AnchorFrame(c, 1.0))
    np.testing.assert_array_equal(r.labels, b.labels)
    np.testing.assert_array_equal(r.world(), p)
    np.testing.assert_allclose(r.positions, p - c, atol=0)
    # labels re-queried in the original frame agree
    np.testing.assert_array_equal(occupancy(m, r.positions + c), r.labels)
