import numpy as np
import pytest

from hoir import accel
from hoir.geometry import PerspectiveCamera, box, concatenate, grid_solid, icosphere, l_shape
from hoir.scenegen.dataset import GenConfig, generate_dataset


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    with accel.backend(request.param):
        yield request.param


@pytest.fixture(scope="session")
def closed_meshes():
    """Five watertight test solids, convex and not."""
    ring = np.ones((5, 5, 2), bool)
    ring[1:4, 1:4] = False
    return {
        "cube": box(),
        "sphere": icosphere(3),
        "l_shape": l_shape(),
        "far_cubes": concatenate([box(), box(center=(3, 0, 0))]),
        "ring": grid_solid(ring, origin=(-1.0, -1.0, -0.2), spacing=0.4),
    }


@pytest.fixture
def camera():
    return PerspectiveCamera.default(64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """One scene, four views at 32 px."""
    root = tmp_path_factory.mktemp("tiny")
    generate_dataset(root, 1, GenConfig(n_scenes=1, n_trans=1, n_views=4, image_size=32))
    return root


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """Two scenes at 64 px, used where masks and views need variety."""
    root = tmp_path_factory.mktemp("small")
    generate_dataset(root, 7, GenConfig(n_scenes=2, n_trans=2, n_views=4, image_size=64))
    return root


def pytest_terminal_summary(terminalreporter):
    from _shared import ACCEPTANCE
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, ok, detail, secs, budget in sorted(ACCEPTANCE):
        limit = f" (limit {budget:.0f}s)" if budget else ""
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} [{num}] {title}: {detail} [{secs:.1f}s{limit}]")
