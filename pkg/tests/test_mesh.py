import math

import numpy as np
import pytest

from zerokey import (
    DegenerateMeshError,
    EmptyMeshError,
    MeshParseError,
    SurfacePoint,
    TriangleMesh,
    geodesic_distance,
    load_mesh,
    make_cube,
    make_icosphere,
    nearest_surface_point,
    normalize_mesh,
)

from conftest import rigid_transform
from oracles import sampled_surface_distance


# ---------------------------------------------------------------------------
# loading


def test_obj_minimal(tmp_path):
    p = tmp_path / "tri.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    mesh = load_mesh(p)
    assert mesh.n_vertices == 3
    assert [tuple(f) for f in mesh.faces] == [(0, 1, 2)]


def test_obj_quad_fan(tmp_path):
    p = tmp_path / "quad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    mesh = load_mesh(p)
    assert [tuple(f) for f in mesh.faces] == [(0, 1, 2), (0, 2, 3)]


def test_obj_negative_indices(tmp_path):
    p = tmp_path / "neg.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n")
    mesh = load_mesh(p)
    assert [tuple(f) for f in mesh.faces] == [(0, 1, 2)]


def test_obj_out_of_range_index(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 5\n")
    with pytest.raises(MeshParseError) as err:
        load_mesh(p)
    # the error carries the offending line number
    assert "4" in str(err.value)


def test_obj_bad_vertex(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 zero 0\n")
    with pytest.raises(MeshParseError):
        load_mesh(p)


def test_obj_ignores_decorations(tmp_path):
    p = tmp_path / "full.obj"
    p.write_text(
        "# comment\nmtllib none.mtl\no thing\n"
        "v 0 0 0\nv 1 0 0\nv 0 1 0\n"
        "vt 0 0\nvn 0 0 1\ns off\n"
        "f 1/1/1 2/1/1 3/1/1\n")
    mesh = load_mesh(p)
    assert mesh.n_faces == 1


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_mesh("/nonexistent/mesh.obj")


def test_empty_mesh(tmp_path):
    p = tmp_path / "pts.obj"
    p.write_text("v 0 0 0\nv 1 0 0\n")
    with pytest.raises(EmptyMeshError):
        load_mesh(p)


def test_ply_ascii_roundtrip(tmp_path):
    p = tmp_path / "tri.ply"
    p.write_text(
        "ply\nformat ascii 1.0\n"
        "element vertex 4\n"
        "property float x\nproperty float y\nproperty float z\n"
        "element face 1\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
        "0 0 0\n1 0 0\n1 1 0\n0 1 0\n"
        "4 0 1 2 3\n")
    mesh = load_mesh(p)
    assert mesh.n_vertices == 4
    assert [tuple(f) for f in mesh.faces] == [(0, 1, 2), (0, 2, 3)]


def test_ply_binary(tmp_path):
    import struct

    header = (
        "ply\nformat binary_little_endian 1.0\n"
        "element vertex 3\n"
        "property float x\nproperty float y\nproperty float z\n"
        "element face 1\n"
        "property list uchar int vertex_indices\n"
        "end_header\n").encode()
    body = b"".join(struct.pack("<fff", *v)
                    for v in [(0, 0, 0), (1, 0, 0), (0, 1, 0)])
    body += struct.pack("<Biii", 3, 0, 1, 2)
    p = tmp_path / "tri.ply"
    p.write_bytes(header + body)
    mesh = load_mesh(p)
    assert mesh.n_vertices == 3
    assert mesh.n_faces == 1
    assert np.allclose(mesh.vertices[1], [1, 0, 0])


def test_ply_truncated(tmp_path):
    p = tmp_path / "trunc.ply"
    p.write_text(
        "ply\nformat ascii 1.0\n"
        "element vertex 3\n"
        "property float x\nproperty float y\nproperty float z\n"
        "element face 1\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
        "0 0 0\n1 0 0\n")
    with pytest.raises(MeshParseError):
        load_mesh(p)


def test_degenerate_faces_dropped():
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0]],
                     dtype=float)
    faces = np.array([[0, 1, 2], [0, 1, 1], [0, 1, 3]])  # repeat + zero area
    mesh = TriangleMesh(verts, faces)
    assert mesh.n_faces == 1
    assert mesh.dropped_faces == 2


def test_face_normals_unit(sphere):
    lengths = np.linalg.norm(sphere.face_normals, axis=1)
    assert np.all(np.abs(lengths - 1.0) < 1e-9)


# ---------------------------------------------------------------------------
# normalization


def test_normalize_cube_corners():
    mesh = normalize_mesh(make_cube(2.0))
    expected = 1.0 / math.sqrt(3.0)
    assert np.allclose(np.abs(mesh.vertices), expected, atol=1e-12)
    radius = np.linalg.norm(mesh.vertices, axis=1).max()
    assert abs(radius - 1.0) < 1e-9


def test_normalize_idempotent(cube):
    again = normalize_mesh(cube)
    assert np.allclose(again.vertices, cube.vertices, atol=1e-12)


def test_normalize_records_transform():
    mesh = make_cube(2.0)
    shifted = TriangleMesh(mesh.vertices + np.array([1.0, 2.0, 3.0]),
                           mesh.faces)
    out = normalize_mesh(shifted)
    assert out.normalization is not None
    assert np.allclose(out.normalization.center, [1.0, 2.0, 3.0])
    assert abs(out.normalization.scale - 1.0 / (2.0 * math.sqrt(3.0))) < 1e-12


def test_degenerate_input_rejected():
    # every face of an all-coincident mesh has zero area, so construction
    # already refuses it; DegenerateMeshError guards normalize_mesh against
    # meshes built through other channels
    verts = np.tile([[1.0, 2.0, 3.0]], (3, 1))
    with pytest.raises((DegenerateMeshError, EmptyMeshError)):
        normalize_mesh(TriangleMesh(verts, np.array([[0, 1, 2]])))


def test_weld_merges_duplicate_vertices(tmp_path):
    p = tmp_path / "split.obj"
    # two triangles sharing an edge, written with duplicated vertices
    p.write_text(
        "v 0 0 0\nv 1 0 0\nv 0 1 0\n"
        "v 1 0 0\nv 0 1 0\nv 1 1 0\n"
        "f 1 2 3\nf 4 5 6\n")
    split = load_mesh(p)
    welded = load_mesh(p, weld_tolerance=1e-6)
    assert split.n_vertices == 6
    assert welded.n_vertices == 4
    assert welded.n_faces == 2


def test_normalize_commutes_with_axis_rotations():
    # the bounding box only follows rotations that permute the axes, so
    # the commutation property is checked on those
    base = make_icosphere(1, 1.0)
    scaled = TriangleMesh(base.vertices * np.array([1.0, 0.7, 0.4]) + 0.3,
                          base.faces)
    R = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1]], dtype=float)  # z quarter turn
    rotated = TriangleMesh(scaled.vertices @ R.T, scaled.faces)
    direct = normalize_mesh(rotated)
    via = normalize_mesh(scaled)
    assert np.allclose(direct.vertices, via.vertices @ R.T, atol=1e-7)


# ---------------------------------------------------------------------------
# surface points


def test_surface_point_barycentric_validation(cube):
    with pytest.raises(ValueError):
        SurfacePoint((0, 0, 0), 0, (0.5, 0.2, 0.2))   # does not sum to 1
    with pytest.raises(ValueError):
        SurfacePoint((0, 0, 0), 0, (1.2, -0.2, 0.0))  # negative weight


def test_nearest_point_on_face_interior(cube):
    corners = cube.face_corners(0)
    interior = corners.mean(axis=0)
    sp = nearest_surface_point(cube, interior)
    assert np.linalg.norm(sp.xyz - interior) < 1e-12
    assert np.allclose(sp.barycentric, [1 / 3, 1 / 3, 1 / 3], atol=1e-9)


def test_nearest_point_perpendicular_foot(plane):
    # directly above the plane: the foot of the perpendicular
    q = np.array([0.1, 0.2, 0.5])
    sp = nearest_surface_point(plane, q)
    assert np.allclose(sp.xyz[:2], q[:2], atol=1e-9)
    assert abs(sp.xyz[2]) < 1e-12
    assert abs(np.linalg.norm(sp.xyz - q) - 0.5) < 1e-9


def test_nearest_point_cube_corner(cube):
    corner = cube.vertices[6]
    q = corner + np.array([0.3, 0.4, 0.5])
    sp = nearest_surface_point(cube, q)
    assert np.linalg.norm(sp.xyz - corner) < 1e-9


def test_nearest_point_roundtrip_invariant(sphere):
    rng = np.random.default_rng(7)
    for _ in range(25):
        q = rng.normal(size=3) * 1.5
        sp = nearest_surface_point(sphere, q)
        again = nearest_surface_point(sphere, sp.xyz)
        assert np.linalg.norm(again.xyz - sp.xyz) < 1e-7


def test_nearest_point_beats_sampling(cube):
    rng = np.random.default_rng(11)
    for _ in range(10):
        q = rng.normal(size=3)
        found = float(np.linalg.norm(nearest_surface_point(cube, q).xyz - q))
        sampled = sampled_surface_distance(cube, q, divisions=24)
        assert found <= sampled + 1e-9


# ---------------------------------------------------------------------------
# geodesics


def test_geodesic_zero_for_same_point(cube, cube_corners):
    for sp in cube_corners.values():
        assert geodesic_distance(cube, sp, sp) == 0.0


def test_geodesic_adjacent_vertices(cube):
    a = nearest_surface_point(cube, cube.vertices[0])
    b = nearest_surface_point(cube, cube.vertices[1])
    edge = float(np.linalg.norm(cube.vertices[0] - cube.vertices[1]))
    d = geodesic_distance(cube, a, b)
    assert abs(d - edge) < 1e-9


def test_geodesic_icosphere_poles(fine_sphere):
    top = nearest_surface_point(fine_sphere, [0.0, 0.0, 1.0])
    bottom = nearest_surface_point(fine_sphere, [0.0, 0.0, -1.0])
    d = geodesic_distance(fine_sphere, top, bottom)
    assert abs(d - math.pi) / math.pi < 0.05
    # the edge-graph path can only overestimate the true great circle
    assert d >= math.pi * 0.99


def test_geodesic_symmetric_exactly(sphere):
    rng = np.random.default_rng(3)
    for _ in range(20):
        a = nearest_surface_point(sphere, rng.normal(size=3))
        b = nearest_surface_point(sphere, rng.normal(size=3))
        assert geodesic_distance(sphere, a, b) == geodesic_distance(sphere, b, a)


def test_geodesic_disconnected_components():
    tri = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float)
    verts = np.vstack([tri, tri + [10, 0, 0]])
    faces = np.array([[0, 1, 2], [3, 4, 5]])
    mesh = TriangleMesh(verts, faces)
    a = nearest_surface_point(mesh, [0.2, 0.2, 0.0])
    b = nearest_surface_point(mesh, [10.2, 0.2, 0.0])
    assert geodesic_distance(mesh, a, b) == math.inf


def test_geodesic_lower_bounds(sphere):
    # geodesic >= euclidean - discretization slack, and the triangle
    # inequality holds up to the same slack
    rng = np.random.default_rng(5)
    graph = sphere._geodesic_graph()
    edges = graph.unique_edges
    max_edge = float(np.linalg.norm(
        sphere.vertices[edges[:, 0]] - sphere.vertices[edges[:, 1]],
        axis=1).max())
    slack = 2.0 * max_edge
    pts = [nearest_surface_point(sphere, rng.normal(size=3))
           for _ in range(9)]
    for i in range(0, 9, 3):
        a, b, c = pts[i], pts[i + 1], pts[i + 2]
        dab = geodesic_distance(sphere, a, b)
        dbc = geodesic_distance(sphere, b, c)
        dac = geodesic_distance(sphere, a, c)
        assert dab >= float(np.linalg.norm(a.xyz - b.xyz)) - slack
        assert dab + dbc >= dac - slack


def test_mean_edge_length_positive(cube):
    assert cube.mean_edge_length() > 0


def test_rigid_transform_preserves_nearest_point(cube):
    # nearest_surface_point commutes with a rigid motion of mesh + query
    rng = np.random.default_rng(13)
    R, t = rigid_transform(rng)
    moved = TriangleMesh(cube.vertices @ R.T + t, cube.faces)
    for _ in range(5):
        q = rng.normal(size=3)
        sp = nearest_surface_point(cube, q)
        sp_moved = nearest_surface_point(moved, q @ R.T + t)
        assert np.linalg.norm(sp_moved.xyz - (sp.xyz @ R.T + t)) < 1e-9
