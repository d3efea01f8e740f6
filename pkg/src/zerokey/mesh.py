"""Triangle meshes: loading, normalization, surface queries, geodesics.

Meshes are plain float64 vertex / int64 face arrays.  All downstream
geometry (rendering, back-projection, evaluation) goes through this module
so every consumer sees the same normalization convention: translate the
bounding-box midpoint to the origin, then scale so the farthest vertex
sits at distance exactly 1.

Geodesic distances are graph shortest paths, not exact polyhedral
geodesics: endpoints snap to the nearest graph node of their own face and
the path runs over mesh vertices and edge midpoints with Euclidean
weights.  The approximation overestimates; the midpoint nodes keep the
detour factor small enough for evaluation at the thresholds used here.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import (
    DegenerateMeshError,
    EmptyMeshError,
    MeshParseError,
)

__all__ = [
    "Normalization",
    "SurfacePoint",
    "TriangleMesh",
    "geodesic_distance",
    "load_mesh",
    "nearest_surface_point",
    "nearest_surface_points",
    "normalize_mesh",
    "pairwise_geodesic",
    "write_keypoint_markers_obj",
]


@dataclass(frozen=True)
class Normalization:
    """Record of the transform applied by :func:`normalize_mesh`."""

    center: tuple[float, float, float]
    scale: float
    convention: str = "bbox-midpoint origin, max vertex radius 1"


@dataclass(frozen=True)
class SurfacePoint:
    """A point constrained to the mesh surface.

    position is the 3D location, face the containing triangle index and
    barycentric the weights of the face's three corners.  Weights are
    non-negative and sum to one; position equals the weighted corner
    combination.  Instances are cheap value objects; use
    :meth:`from_barycentric` to guarantee consistency with a mesh.
    """

    position: tuple[float, float, float]
    face: int
    barycentric: tuple[float, float, float]

    def __post_init__(self):
        b = self.barycentric
        if min(b) < -1e-9 or abs(sum(b) - 1.0) > 1e-9:
            raise ValueError(f"bad barycentric weights {b}")
        if self.face < 0:
            raise ValueError(f"bad face index {self.face}")

    @classmethod
    def from_barycentric(cls, mesh: "TriangleMesh", face: int,
                         barycentric) -> "SurfacePoint":
        b = np.asarray(barycentric, dtype=np.float64)
        corners = mesh.vertices[mesh.faces[face]]
        pos = b @ corners
        return cls(tuple(pos.tolist()), int(face), tuple(b.tolist()))

    @property
    def xyz(self) -> np.ndarray:
        return np.asarray(self.position, dtype=np.float64)


class TriangleMesh:
    """Indexed triangle mesh with per-face unit normals.

    Faces with repeated vertex indices or exactly zero area are dropped on
    construction and counted in ``dropped_faces``.  Arrays are marked
    read-only; derived structures (geodesic graph) are built lazily once
    and reused.
    """

    def __init__(self, vertices, faces, dropped_faces: int = 0,
                 normalization: Normalization | None = None):
        vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        faces = np.ascontiguousarray(faces, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise ValueError(f"vertices must be (V, 3), got {vertices.shape}")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise ValueError(f"faces must be (F, 3), got {faces.shape}")
        if faces.size and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise ValueError("face indices out of range")

        keep, n_dropped = self._nondegenerate(vertices, faces)
        faces = faces[keep]
        if len(faces) == 0:
            raise EmptyMeshError("mesh has no usable faces")

        self.vertices = vertices
        self.faces = faces
        self.dropped_faces = dropped_faces + n_dropped
        self.normalization = normalization

        cross = np.cross(
            vertices[faces[:, 1]] - vertices[faces[:, 0]],
            vertices[faces[:, 2]] - vertices[faces[:, 0]],
        )
        norm = np.sqrt((cross ** 2).sum(axis=1))
        self.face_normals = cross / norm[:, None]

        self.vertices.flags.writeable = False
        self.faces.flags.writeable = False
        self.face_normals.flags.writeable = False
        self._geodesic: _GeodesicGraph | None = None

    @staticmethod
    def _nondegenerate(vertices, faces):
        if len(faces) == 0:
            return np.zeros(0, dtype=bool), 0
        distinct = (
            (faces[:, 0] != faces[:, 1])
            & (faces[:, 1] != faces[:, 2])
            & (faces[:, 0] != faces[:, 2])
        )
        cross = np.cross(
            vertices[faces[:, 1]] - vertices[faces[:, 0]],
            vertices[faces[:, 2]] - vertices[faces[:, 0]],
        )
        area2 = (cross ** 2).sum(axis=1)
        keep = distinct & (area2 > 0.0)
        return keep, int((~keep).sum())

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def face_corners(self, face: int) -> np.ndarray:
        return self.vertices[self.faces[face]]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def mean_edge_length(self) -> float:
        graph = self._geodesic_graph()
        return float(graph.mean_edge_length)

    def _geodesic_graph(self) -> "_GeodesicGraph":
        if self._geodesic is None:
            self._geodesic = _GeodesicGraph(self)
        return self._geodesic


# ---------------------------------------------------------------------------
# loading


def load_mesh(path, weld_tolerance: float | None = None) -> TriangleMesh:
    """Load a triangle mesh from an OBJ or PLY file.

    Parameters
    ----------
    path : str or Path
        File to read.  Format is chosen by extension (``.obj`` / ``.ply``),
        falling back to content sniffing.
    weld_tolerance : float, optional
        When given, vertices closer than this are merged before the mesh
        is built.  Off by default; triangle soups stay soups.

    Returns
    -------
    TriangleMesh
        Polygons with more than three sides are fan-triangulated.

    Raises
    ------
    FileNotFoundError
        If the file does not exist.
    MeshParseError
        On malformed content, with the offending line or offset.
    EmptyMeshError
        If no usable faces remain after parsing.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(str(path))
    data = path.read_bytes()

    suffix = path.suffix.lower()
    if suffix == ".ply" or data[:3] == b"ply":
        vertices, faces = _parse_ply(data)
    elif suffix == ".obj" or suffix == "" or not data[:3] == b"ply":
        vertices, faces = _parse_obj(data)
    else:
        raise MeshParseError(f"unrecognized mesh format: {path.name}")

    if len(faces) == 0:
        raise EmptyMeshError(f"{path.name} contains no faces")

    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    if weld_tolerance is not None:
        vertices, faces = _weld(vertices, faces, weld_tolerance)
    return TriangleMesh(vertices, faces)


def _fan_triangulate(poly: list[int]) -> list[tuple[int, int, int]]:
    return [(poly[0], poly[i], poly[i + 1]) for i in range(1, len(poly) - 1)]


def _parse_obj(data: bytes):
    vertices: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    for lineno, raw in enumerate(data.decode("utf-8", errors="replace").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise MeshParseError("vertex needs 3 coordinates", line=lineno)
            try:
                vertices.append((float(parts[1]), float(parts[2]), float(parts[3])))
            except ValueError:
                raise MeshParseError(f"bad vertex coordinate in {line!r}",
                                     line=lineno) from None
        elif tag == "f":
            if len(parts) < 4:
                raise MeshParseError("face needs at least 3 vertices", line=lineno)
            poly = []
            for token in parts[1:]:
                head = token.split("/")[0]
                try:
                    idx = int(head)
                except ValueError:
                    raise MeshParseError(f"bad face index {token!r}",
                                         line=lineno) from None
                if idx < 0:
                    idx = len(vertices) + idx
                else:
                    idx = idx - 1
                if idx < 0 or idx >= len(vertices):
                    raise MeshParseError(f"face index {token!r} out of range",
                                         line=lineno)
                poly.append(idx)
            faces.extend(_fan_triangulate(poly))
        # vt, vn, usemtl, mtllib, o, g, s and friends are ignored
    return vertices, faces


_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
    "int64": "i8", "uint64": "u8",
}


def _parse_ply(data: bytes):
    # header is ASCII regardless of body encoding
    end = data.find(b"end_header")
    if data[:3] != b"ply" or end < 0:
        raise MeshParseError("not a PLY file (missing header)")
    body_start = data.find(b"\n", end) + 1
    header_lines = data[:end].decode("ascii", errors="replace").splitlines()

    fmt = None
    elements: list[dict] = []
    for lineno, line in enumerate(header_lines, 1):
        parts = line.strip().split()
        if not parts or parts[0] in ("ply", "comment", "obj_info"):
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            if len(parts) != 3:
                raise MeshParseError(f"bad element line {line!r}", line=lineno)
            elements.append({"name": parts[1], "count": int(parts[2]),
                             "props": []})
        elif parts[0] == "property":
            if not elements:
                raise MeshParseError("property before element", line=lineno)
            if parts[1] == "list":
                if len(parts) != 5:
                    raise MeshParseError(f"bad list property {line!r}", line=lineno)
                elements[-1]["props"].append(("list", parts[2], parts[3], parts[4]))
            else:
                if len(parts) != 3:
                    raise MeshParseError(f"bad property {line!r}", line=lineno)
                elements[-1]["props"].append(("scalar", parts[1], parts[2]))

    if fmt == "ascii":
        return _parse_ply_ascii(data[body_start:], elements)
    if fmt == "binary_little_endian":
        return _parse_ply_binary(data[body_start:], elements)
    raise MeshParseError(f"unsupported PLY format {fmt!r}")


def _ply_vertex_faces(elements):
    names = [e["name"] for e in elements]
    if "vertex" not in names or "face" not in names:
        raise MeshParseError("PLY needs vertex and face elements")


def _parse_ply_ascii(body: bytes, elements):
    _ply_vertex_faces(elements)
    rows = body.decode("ascii", errors="replace").splitlines()
    rows = [r for r in (row.strip() for row in rows) if r]
    cursor = 0
    vertices = None
    faces: list[tuple[int, int, int]] = []
    for elem in elements:
        count = elem["count"]
        if cursor + count > len(rows):
            raise MeshParseError(
                f"PLY body truncated in element {elem['name']!r}")
        chunk = rows[cursor:cursor + count]
        cursor += count
        if elem["name"] == "vertex":
            cols = {p[2]: i for i, p in enumerate(elem["props"])
                    if p[0] == "scalar"}
            # scalar-only vertex rows; a list property here is out of scope
            if any(p[0] == "list" for p in elem["props"]):
                raise MeshParseError("list property on vertex element")
            try:
                arr = np.array([[float(t) for t in row.split()] for row in chunk],
                               dtype=np.float64)
                vertices = arr[:, [cols["x"], cols["y"], cols["z"]]]
            except (ValueError, KeyError, IndexError):
                raise MeshParseError("bad PLY vertex row") from None
        elif elem["name"] == "face":
            for row in chunk:
                tokens = row.split()
                try:
                    n = int(tokens[0])
                    poly = [int(t) for t in tokens[1:1 + n]]
                except (ValueError, IndexError):
                    raise MeshParseError(f"bad PLY face row {row!r}") from None
                if len(poly) != n or n < 3:
                    raise MeshParseError(f"bad PLY face row {row!r}")
                faces.extend(_fan_triangulate(poly))
    if vertices is None:
        raise MeshParseError("PLY vertex element missing")
    _check_face_range(faces, len(vertices))
    return vertices, faces


def _parse_ply_binary(body: bytes, elements):
    _ply_vertex_faces(elements)
    offset = 0
    vertices = None
    faces: list[tuple[int, int, int]] = []
    for elem in elements:
        count = elem["count"]
        if elem["name"] == "vertex":
            if any(p[0] == "list" for p in elem["props"]):
                raise MeshParseError("list property on vertex element")
            dtype = np.dtype([(p[2], "<" + _PLY_TYPES[p[1]])
                              for p in elem["props"]])
            nbytes = dtype.itemsize * count
            if offset + nbytes > len(body):
                raise MeshParseError("PLY body truncated in vertex element")
            arr = np.frombuffer(body, dtype=dtype, count=count, offset=offset)
            offset += nbytes
            try:
                vertices = np.stack(
                    [arr["x"], arr["y"], arr["z"]], axis=1).astype(np.float64)
            except KeyError:
                raise MeshParseError("PLY vertex element lacks x/y/z") from None
        elif elem["name"] == "face":
            lists = [p for p in elem["props"] if p[0] == "list"]
            scalars = [p for p in elem["props"] if p[0] == "scalar"]
            if len(lists) != 1 or scalars:
                raise MeshParseError("unsupported PLY face properties")
            _, count_t, index_t, name = lists[0]
            if name not in ("vertex_indices", "vertex_index"):
                raise MeshParseError(f"unsupported face list {name!r}")
            count_dt = np.dtype("<" + _PLY_TYPES[count_t])
            index_dt = np.dtype("<" + _PLY_TYPES[index_t])
            for _ in range(count):
                if offset + count_dt.itemsize > len(body):
                    raise MeshParseError("PLY body truncated in face element")
                n = int(np.frombuffer(body, dtype=count_dt, count=1,
                                      offset=offset)[0])
                offset += count_dt.itemsize
                nbytes = index_dt.itemsize * n
                if n < 3 or offset + nbytes > len(body):
                    raise MeshParseError("bad PLY face record")
                poly = np.frombuffer(body, dtype=index_dt, count=n,
                                     offset=offset).astype(np.int64)
                offset += nbytes
                faces.extend(_fan_triangulate(poly.tolist()))
        else:
            # fixed-size foreign elements can be skipped; list-bearing ones cannot
            if any(p[0] == "list" for p in elem["props"]):
                raise MeshParseError(
                    f"cannot skip PLY element {elem['name']!r} with list property")
            size = sum(np.dtype(_PLY_TYPES[p[1]]).itemsize
                       for p in elem["props"])
            offset += size * count
    if vertices is None:
        raise MeshParseError("PLY vertex element missing")
    _check_face_range(faces, len(vertices))
    return vertices, faces


def _check_face_range(faces, n_vertices):
    for tri in faces:
        for idx in tri:
            if idx < 0 or idx >= n_vertices:
                raise MeshParseError(f"face index {idx} out of range")


def _weld(vertices, faces, tolerance):
    if tolerance <= 0:
        return vertices, faces
    keys = np.round(vertices / tolerance).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True,
                                  return_inverse=True)
    remap = inverse[faces]
    return vertices[first], remap


# ---------------------------------------------------------------------------
# normalization


def normalize_mesh(mesh: TriangleMesh) -> TriangleMesh:
    """Translate the bounding-box midpoint to the origin and scale so the
    farthest vertex sits at distance exactly 1.

    Idempotent up to floating point.  Raises DegenerateMeshError when all
    vertices coincide.  The applied transform is recorded on the returned
    mesh's ``normalization`` attribute.
    """
    lo, hi = mesh.bounds()
    center = (lo + hi) / 2.0
    shifted = mesh.vertices - center
    radius = float(np.sqrt((shifted ** 2).sum(axis=1)).max())
    if radius == 0.0:
        raise DegenerateMeshError("all vertices coincide")
    record = Normalization(center=tuple(center.tolist()), scale=1.0 / radius)
    return TriangleMesh(shifted / radius, mesh.faces,
                        dropped_faces=mesh.dropped_faces,
                        normalization=record)


# ---------------------------------------------------------------------------
# nearest surface point


def nearest_surface_points(mesh: TriangleMesh, queries) -> list[SurfacePoint]:
    """Closest surface point for each query, exact over all faces.

    Brute force closest-point-on-triangle per face, vectorized per query.
    Equidistant faces resolve to the lowest face index.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    a = mesh.vertices[mesh.faces[:, 0]]
    b = mesh.vertices[mesh.faces[:, 1]]
    c = mesh.vertices[mesh.faces[:, 2]]
    out = []
    for q in queries:
        bary = _closest_point_barycentric(q, a, b, c)
        pos = (bary[:, 0:1] * a + bary[:, 1:2] * b + bary[:, 2:3] * c)
        d2 = ((pos - q) ** 2).sum(axis=1)
        face = int(np.argmin(d2))
        out.append(SurfacePoint(tuple(pos[face].tolist()), face,
                                tuple(bary[face].tolist())))
    return out


def nearest_surface_point(mesh: TriangleMesh, query) -> SurfacePoint:
    """Closest point on the mesh surface to an arbitrary 3D query."""
    return nearest_surface_points(mesh, [query])[0]


def _closest_point_barycentric(p, a, b, c):
    """Barycentric weights of the closest point to p on each triangle.

    Region classification over all triangles at once, following the
    standard closest-point-on-triangle case analysis.
    """
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = (ab * ap).sum(axis=1)
    d2 = (ac * ap).sum(axis=1)
    bp = p - b
    d3 = (ab * bp).sum(axis=1)
    d4 = (ac * bp).sum(axis=1)
    cp = p - c
    d5 = (ab * cp).sum(axis=1)
    d6 = (ac * cp).sum(axis=1)

    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    n = len(a)
    bary = np.empty((n, 3), dtype=np.float64)
    done = np.zeros(n, dtype=bool)

    def settle(mask, u, v, w):
        mask = mask & ~done
        bary[mask, 0] = u if np.isscalar(u) else u[mask]
        bary[mask, 1] = v if np.isscalar(v) else v[mask]
        bary[mask, 2] = w if np.isscalar(w) else w[mask]
        done[mask] = True

    settle((d1 <= 0) & (d2 <= 0), 1.0, 0.0, 0.0)                 # vertex a
    settle((d3 >= 0) & (d4 <= d3), 0.0, 1.0, 0.0)                # vertex b
    settle((d6 >= 0) & (d5 <= d6), 0.0, 0.0, 1.0)                # vertex c

    with np.errstate(divide="ignore", invalid="ignore"):
        t_ab = d1 / (d1 - d3)
        settle((vc <= 0) & (d1 >= 0) & (d3 <= 0), 1.0 - t_ab, t_ab, 0.0)
        t_ac = d2 / (d2 - d6)
        settle((vb <= 0) & (d2 >= 0) & (d6 <= 0), 1.0 - t_ac, 0.0, t_ac)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        settle((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0),
               0.0, 1.0 - t_bc, t_bc)

        denom = va + vb + vc
        v = vb / denom
        w = vc / denom
        settle(np.ones(n, dtype=bool), 1.0 - v - w, v, w)        # interior

    # guard against drift from the divisions
    np.clip(bary, 0.0, 1.0, out=bary)
    bary /= bary.sum(axis=1, keepdims=True)
    return bary


# ---------------------------------------------------------------------------
# geodesics


class _GeodesicGraph:
    """Shortest-path structure over mesh vertices and edge midpoints.

    Nodes are the V mesh vertices followed by one midpoint per unique
    undirected edge.  Within each face every pair of its six nodes is
    linked with Euclidean weight.  Built once per mesh.
    """

    def __init__(self, mesh: TriangleMesh):
        self.mesh = mesh
        V = mesh.n_vertices
        faces = mesh.faces

        edge_pairs = np.concatenate([
            faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [0, 2]],
        ])
        edge_pairs = np.sort(edge_pairs, axis=1)
        unique_edges, inverse = np.unique(edge_pairs, axis=0,
                                          return_inverse=True)
        self.unique_edges = unique_edges
        E = len(unique_edges)
        # per-face midpoint node ids, in edge order (01, 12, 02)
        mid_of_face = V + inverse.reshape(3, -1).T

        verts = mesh.vertices
        midpoints = (verts[unique_edges[:, 0]] + verts[unique_edges[:, 1]]) / 2.0
        self.nodes = np.concatenate([verts, midpoints], axis=0)

        edge_lengths = np.sqrt(
            ((verts[unique_edges[:, 0]] - verts[unique_edges[:, 1]]) ** 2)
            .sum(axis=1))
        self.mean_edge_length = edge_lengths.mean()

        face_nodes = np.concatenate([faces, mid_of_face], axis=1)  # (F, 6)
        combos = [(i, j) for i in range(6) for j in range(i + 1, 6)]
        src = np.concatenate([face_nodes[:, i] for i, _ in combos])
        dst = np.concatenate([face_nodes[:, j] for _, j in combos])
        w = np.sqrt(((self.nodes[src] - self.nodes[dst]) ** 2).sum(axis=1))

        # drop duplicate (src, dst) pairs: csr construction sums duplicates
        lo = np.minimum(src, dst)
        hi = np.maximum(src, dst)
        key = lo * (V + E) + hi
        _, keep = np.unique(key, return_index=True)
        lo, hi, w = lo[keep], hi[keep], w[keep]

        n = V + E
        self.graph = csr_matrix(
            (np.concatenate([w, w]),
             (np.concatenate([lo, hi]), np.concatenate([hi, lo]))),
            shape=(n, n))
        self._face_nodes = face_nodes

    def snap(self, point: SurfacePoint) -> tuple[int, float]:
        """Nearest graph node among the point's own face nodes."""
        nodes = self._face_nodes[point.face]
        d = np.sqrt(((self.nodes[nodes] - point.xyz) ** 2).sum(axis=1))
        best = int(np.argmin(d))
        return int(nodes[best]), float(d[best])

    def single(self, a: SurfacePoint, b: SurfacePoint) -> float:
        """One distance, canonicalized so (a, b) and (b, a) run the same
        query and round identically."""
        delta = a.xyz - b.xyz
        euclid = float(np.sqrt((delta ** 2).sum()))
        if euclid == 0.0 or a.face == b.face:
            return euclid
        na, offa = self.snap(a)
        nb, offb = self.snap(b)
        if nb < na:
            na, nb = nb, na
            offa, offb = offb, offa
        row = dijkstra(self.graph, directed=False, indices=[na])[0]
        # fsum is order-independent, so the offsets cannot break symmetry
        return float(math.fsum((offa, float(row[nb]), offb)))

    def pairwise(self, points_a, points_b) -> np.ndarray:
        snaps_a = [self.snap(p) for p in points_a]
        snaps_b = [self.snap(p) for p in points_b]
        sources = sorted({n for n, _ in snaps_a})
        index_of = {n: i for i, n in enumerate(sources)}
        dist = dijkstra(self.graph, directed=False, indices=sources)

        out = np.empty((len(points_a), len(points_b)), dtype=np.float64)
        for i, (na, offa) in enumerate(snaps_a):
            row = dist[index_of[na]]
            for j, (nb, offb) in enumerate(snaps_b):
                a, b = points_a[i], points_b[j]
                delta = a.xyz - b.xyz
                euclid = float(np.sqrt((delta ** 2).sum()))
                if euclid == 0.0 or a.face == b.face:
                    out[i, j] = euclid
                else:
                    out[i, j] = offa + row[nb] + offb
        return out


def geodesic_distance(mesh: TriangleMesh, a: SurfacePoint,
                      b: SurfacePoint) -> float:
    """Approximate geodesic distance between two surface points.

    Points on a shared face use the straight segment.  Otherwise each
    endpoint snaps to the nearest graph node of its own face and the
    shortest path over the edge/midpoint graph is taken, snap offsets
    added.  Exactly symmetric in its arguments.  Points on mutually
    unreachable components give +inf rather than raising.
    """
    return mesh._geodesic_graph().single(a, b)


def pairwise_geodesic(mesh: TriangleMesh, points_a, points_b) -> np.ndarray:
    """Geodesic distance matrix between two lists of surface points."""
    return mesh._geodesic_graph().pairwise(list(points_a), list(points_b))


# ---------------------------------------------------------------------------
# debug output

_OCTA_VERTS = np.array([
    [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1],
], dtype=np.float64)
_OCTA_FACES = [
    (0, 2, 4), (2, 1, 4), (1, 3, 4), (3, 0, 4),
    (2, 0, 5), (1, 2, 5), (3, 1, 5), (0, 3, 5),
]


def write_keypoint_markers_obj(path, points, radius: float = 0.02) -> None:
    """Dump keypoints as small octahedra to an OBJ file for inspection."""
    path = Path(path)
    lines = ["# keypoint markers"]
    base = 1
    for p in points:
        xyz = np.asarray(getattr(p, "position", p), dtype=np.float64)
        for v in _OCTA_VERTS:
            q = xyz + radius * v
            lines.append(f"v {q[0]:.9g} {q[1]:.9g} {q[2]:.9g}")
        for f in _OCTA_FACES:
            lines.append(f"f {base + f[0]} {base + f[1]} {base + f[2]}")
        base += 6
    path.write_text("\n".join(lines) + "\n")
