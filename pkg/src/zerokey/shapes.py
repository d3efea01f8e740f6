"""Procedural test shapes.

Small generators used by the demos, the simulator and the test suite.
All return un-normalized meshes; pass them through normalize_mesh to get
the canonical pose.
"""

from __future__ import annotations

import numpy as np

from .mesh import TriangleMesh

__all__ = ["make_cube", "make_icosphere", "make_grid_plane"]


def make_cube(half_extent: float = 1.0) -> TriangleMesh:
    """Axis-aligned cube with corners at (+-h, +-h, +-h), 12 triangles."""
    h = float(half_extent)
    corners = np.array([
        [-h, -h, -h], [+h, -h, -h], [+h, +h, -h], [-h, +h, -h],
        [-h, -h, +h], [+h, -h, +h], [+h, +h, +h], [-h, +h, +h],
    ])
    quads = [
        (0, 1, 2, 3),  # z = -h
        (4, 7, 6, 5),  # z = +h
        (0, 4, 5, 1),  # y = -h
        (3, 2, 6, 7),  # y = +h
        (0, 3, 7, 4),  # x = -h
        (1, 5, 6, 2),  # x = +h
    ]
    faces = []
    for a, b, c, d in quads:
        faces.append((a, b, c))
        faces.append((a, c, d))
    return TriangleMesh(corners, np.array(faces))


def make_icosphere(subdivisions: int = 3, radius: float = 1.0) -> TriangleMesh:
    """Icosahedron subdivided and projected onto a sphere."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    verts /= np.sqrt((verts ** 2).sum(axis=1))[:, None]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]

    verts = [tuple(v) for v in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = np.array(verts[i]) + np.array(verts[j])
                m /= np.sqrt((m ** 2).sum())
                cache[key] = len(verts)
                verts.append(tuple(m))
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces

    return TriangleMesh(np.array(verts) * radius, np.array(faces))


def make_grid_plane(n: int = 8, extent: float = 1.0) -> TriangleMesh:
    """Flat square in the z=0 plane, (n x n) cells, 2*n*n triangles."""
    xs = np.linspace(-extent, extent, n + 1)
    ys = np.linspace(-extent, extent, n + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    verts = np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], axis=1)

    def vid(i, j):
        return i * (n + 1) + j

    faces = []
    for i in range(n):
        for j in range(n):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            faces.append((a, b, c))
            faces.append((a, c, d))
    return TriangleMesh(verts, np.array(faces))
