import json

import numpy as np
import pytest

from zerokey import (
    make_cube,
    make_grid_plane,
    make_icosphere,
    nearest_surface_point,
    normalize_mesh,
)


@pytest.fixture(scope="session")
def cube():
    # corners land at (+-1/sqrt(3))^3 after normalization
    return normalize_mesh(make_cube(2.0))


@pytest.fixture(scope="session")
def sphere():
    return normalize_mesh(make_icosphere(3, 1.0))


@pytest.fixture(scope="session")
def fine_sphere():
    return normalize_mesh(make_icosphere(4, 1.0))


@pytest.fixture(scope="session")
def plane():
    return normalize_mesh(make_grid_plane(8, 1.0))


def corner_keypoints(mesh):
    """id -> SurfacePoint for the 8 cube corners, ids in vertex order."""
    return {i: nearest_surface_point(mesh, v)
            for i, v in enumerate(mesh.vertices)}


@pytest.fixture(scope="session")
def cube_corners(cube):
    return corner_keypoints(cube)


def write_ground_truth(path, mesh, model_id="cube"):
    """Ground-truth JSON naming every mesh vertex by index."""
    doc = {
        "model_id": model_id,
        "keypoints": [{"id": i, "vertex_index": i}
                      for i in range(len(mesh.vertices))],
    }
    path = str(path)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
    return path


@pytest.fixture()
def cube_gt_path(cube, tmp_path):
    return write_ground_truth(tmp_path / "cube_gt.json", cube)


def write_cube_obj(path):
    """The normalized cube as an OBJ file, for CLI and loader tests."""
    mesh = normalize_mesh(make_cube(2.0))
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}")
    for f in mesh.faces:
        lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    path = str(path)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


@pytest.fixture()
def cube_obj_path(tmp_path):
    return write_cube_obj(tmp_path / "cube.obj")


def rigid_transform(rng):
    """Random rotation + translation as a (R, t) pair."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    R = np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])
    t = rng.normal(scale=0.5, size=3)
    return R, t
