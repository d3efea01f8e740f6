"""Calibrated multi-view rendering of triangle meshes.

Pure numpy z-buffer rasterizer.  Coverage is decided by the projected
triangle at each pixel center and depth is the exact ray parameter t of
the pixel-center ray against the face plane, so the buffers match a
brute-force ray caster except for sub-pixel edge cases along silhouettes.

Conventions, used consistently everywhere:
  * pixel centers sit at integer coordinates; the image spans
    [-0.5, width - 0.5) x [-0.5, height - 0.5), +x right, +y down;
  * the depth buffer stores t with ``origin + t * direction`` the surface
    hit for the unit-length pixel-center ray, +inf for background;
  * the face-id buffer stores the triangle index, -1 for background.

Rendering is single-threaded and bit-deterministic for a given mesh,
camera and style.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    BehindCameraError,
    InvalidViewCountError,
    OutOfBoundsError,
)
from .mesh import TriangleMesh

__all__ = [
    "Camera",
    "RenderedView",
    "ShadeStyle",
    "FACE_NONE",
    "generate_views",
    "pixel_footprint",
    "project",
    "unproject_ray",
    "render",
    "render_with_marker",
    "save_png",
    "load_png",
    "save_raw_buffer",
    "load_raw_buffer",
]

FACE_NONE = -1

DEFAULT_DISTANCE = 2.5
DEFAULT_FOV = np.deg2rad(40.0)
DEFAULT_SIZE = 512


@dataclass(frozen=True)
class Camera:
    """Pinhole camera looking at a target point.

    fov is the vertical field of view in radians; pixels are square.
    """

    position: tuple[float, float, float]
    target: tuple[float, float, float] = (0.0, 0.0, 0.0)
    up_hint: tuple[float, float, float] = (0.0, 1.0, 0.0)
    fov: float = DEFAULT_FOV
    width: int = DEFAULT_SIZE
    height: int = DEFAULT_SIZE
    near: float = 0.1
    far: float = 100.0

    def __post_init__(self):
        if not (0.0 < self.fov < np.pi):
            raise ValueError(f"fov must be in (0, pi), got {self.fov}")
        if self.width < 16 or self.height < 16:
            raise ValueError("image must be at least 16x16")
        if not (0.0 < self.near < self.far):
            raise ValueError("need 0 < near < far")
        pos = np.asarray(self.position, dtype=np.float64)
        tgt = np.asarray(self.target, dtype=np.float64)
        if np.array_equal(pos, tgt):
            raise ValueError("camera position equals target")

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Right, up, forward unit vectors (forward points at the target)."""
        pos = np.asarray(self.position, dtype=np.float64)
        tgt = np.asarray(self.target, dtype=np.float64)
        fwd = tgt - pos
        fwd = fwd / np.sqrt((fwd ** 2).sum())
        up = np.asarray(self.up_hint, dtype=np.float64)
        right = np.cross(fwd, up)
        norm = np.sqrt((right ** 2).sum())
        if norm < 1e-12:
            # looking along the up hint; fall back to +x
            up = np.array([1.0, 0.0, 0.0])
            right = np.cross(fwd, up)
            norm = np.sqrt((right ** 2).sum())
        right = right / norm
        true_up = np.cross(right, fwd)
        return right, true_up, fwd

    @property
    def distance(self) -> float:
        pos = np.asarray(self.position, dtype=np.float64)
        tgt = np.asarray(self.target, dtype=np.float64)
        return float(np.sqrt(((pos - tgt) ** 2).sum()))


@dataclass(frozen=True)
class ShadeStyle:
    """Flat background plus headlight Lambertian surface shading."""

    background: tuple[int, int, int] = (230, 230, 230)
    albedo: tuple[int, int, int] = (178, 178, 186)


@dataclass
class RenderedView:
    """One rendered view with its calibration and raw buffers.

    Keeps a reference to the rendered mesh so detections can be lifted
    back onto the surface without threading the mesh separately.
    """

    view_id: int
    camera: Camera
    color: np.ndarray            # (H, W, 3) uint8
    depth: np.ndarray            # (H, W) float64, ray parameter t, +inf = background
    face_ids: np.ndarray         # (H, W) int32, FACE_NONE = background
    mesh: "TriangleMesh | None" = None
    marker_visible: bool | None = None

    def png_bytes(self) -> bytes:
        return _encode_png(self.color)


# ---------------------------------------------------------------------------
# view catalog


def generate_views(count: int, distance: float = DEFAULT_DISTANCE,
                   fov: float = DEFAULT_FOV, width: int = DEFAULT_SIZE,
                   height: int = DEFAULT_SIZE, near: float = 0.1,
                   far: float = 100.0) -> list[Camera]:
    """Deterministic camera catalog looking at the origin.

    count=6 uses the axis directions and count=26 all nonzero sign
    offsets in {-1,0,1}^3, both in lexicographic offset order.  Any other
    count places cameras on a Fibonacci sphere.
    """
    if not isinstance(count, (int, np.integer)) or count <= 0:
        raise InvalidViewCountError(f"view count must be positive, got {count}")

    if count in (6, 26):
        offsets = [
            (i, j, k)
            for i in (-1, 0, 1) for j in (-1, 0, 1) for k in (-1, 0, 1)
            if (i, j, k) != (0, 0, 0)
        ]
        if count == 6:
            offsets = [o for o in offsets if sum(abs(v) for v in o) == 1]
        dirs = np.array(offsets, dtype=np.float64)
        dirs /= np.sqrt((dirs ** 2).sum(axis=1))[:, None]
    else:
        # Fibonacci sphere
        idx = np.arange(count, dtype=np.float64)
        golden = (1.0 + np.sqrt(5.0)) / 2.0
        z = 1.0 - (2.0 * idx + 1.0) / count
        r = np.sqrt(np.maximum(0.0, 1.0 - z ** 2))
        theta = 2.0 * np.pi * idx / golden
        dirs = np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)

    cameras = []
    for d in dirs:
        up = (0.0, 1.0, 0.0)
        if abs(d[0]) < 1e-12 and abs(d[2]) < 1e-12:
            up = (1.0, 0.0, 0.0)
        cameras.append(Camera(position=tuple((distance * d).tolist()),
                              up_hint=up, fov=fov, width=width,
                              height=height, near=near, far=far))
    return cameras


def pixel_footprint(camera: Camera, depth: float) -> float:
    """World-space extent of one pixel at the given ray depth."""
    return depth * 2.0 * np.tan(camera.fov / 2.0) / camera.height


# ---------------------------------------------------------------------------
# projection


def project(camera: Camera, point) -> tuple[float, float, float]:
    """Project a world point to continuous pixel coordinates.

    Returns (px, py, t) with t the ray parameter such that the unit ray
    through (px, py) reaches the point at t.  Points at or behind the
    camera plane raise BehindCameraError.  Coordinates may fall outside
    the image; callers decide what off-image means.
    """
    right, up, fwd = camera.basis()
    pos = np.asarray(camera.position, dtype=np.float64)
    d = np.asarray(point, dtype=np.float64) - pos
    z = float(d @ fwd)
    if z <= 1e-12:
        raise BehindCameraError(f"point {point} is behind the camera")
    x = float(d @ right)
    y = float(d @ up)
    tan_half = np.tan(camera.fov / 2.0)
    aspect = camera.width / camera.height
    x_ndc = x / (z * tan_half * aspect)
    y_ndc = y / (z * tan_half)
    px = (x_ndc + 1.0) / 2.0 * camera.width - 0.5
    py = (1.0 - y_ndc) / 2.0 * camera.height - 0.5
    t = float(np.sqrt((d ** 2).sum()))
    return px, py, t


def unproject_ray(camera: Camera, pixel) -> tuple[np.ndarray, np.ndarray]:
    """World-space unit ray through a (possibly fractional) pixel coordinate.

    Raises OutOfBoundsError when the coordinate lies outside the image
    extent [-0.5, size - 0.5].
    """
    px, py = float(pixel[0]), float(pixel[1])
    if not (-0.5 <= px <= camera.width - 0.5) or \
       not (-0.5 <= py <= camera.height - 0.5):
        raise OutOfBoundsError(
            f"pixel ({px}, {py}) outside {camera.width}x{camera.height} image")
    right, up, fwd = camera.basis()
    tan_half = np.tan(camera.fov / 2.0)
    aspect = camera.width / camera.height
    x_ndc = (px + 0.5) * 2.0 / camera.width - 1.0
    y_ndc = 1.0 - (py + 0.5) * 2.0 / camera.height
    d = (x_ndc * tan_half * aspect) * right + (y_ndc * tan_half) * up + fwd
    d = d / np.sqrt((d ** 2).sum())
    return np.asarray(camera.position, dtype=np.float64), d


def _ray_grid(camera: Camera) -> np.ndarray:
    """Unit ray directions for every pixel center, (H, W, 3)."""
    right, up, fwd = camera.basis()
    tan_half = np.tan(camera.fov / 2.0)
    aspect = camera.width / camera.height
    xs = (np.arange(camera.width) + 0.5) * 2.0 / camera.width - 1.0
    ys = 1.0 - (np.arange(camera.height) + 0.5) * 2.0 / camera.height
    gx, gy = np.meshgrid(xs * tan_half * aspect, ys * tan_half)
    d = (gx[..., None] * right + gy[..., None] * up + fwd)
    d /= np.sqrt((d ** 2).sum(axis=2))[..., None]
    return d


# ---------------------------------------------------------------------------
# rasterizer


def render(mesh: TriangleMesh, camera: Camera, view_id: int = 0,
           style: ShadeStyle = ShadeStyle()) -> RenderedView:
    """Render one view: shaded color, ray-parameter depth, face ids.

    Faces are double-sided; occlusion comes from the depth test alone so
    inconsistent winding is harmless.  Faces with a vertex at or behind
    the camera plane are skipped (no near-plane clipping; scene setups
    here keep geometry well in front of the camera).
    """
    W, H = camera.width, camera.height
    depth = np.full((H, W), np.inf, dtype=np.float64)
    face_ids = np.full((H, W), FACE_NONE, dtype=np.int32)

    right, up, fwd = camera.basis()
    pos = np.asarray(camera.position, dtype=np.float64)
    rel = mesh.vertices - pos
    zc = rel @ fwd
    xc = rel @ right
    yc = rel @ up
    tan_half = np.tan(camera.fov / 2.0)
    aspect = W / H
    with np.errstate(divide="ignore", invalid="ignore"):
        px = (xc / (zc * tan_half * aspect) + 1.0) / 2.0 * W - 0.5
        py = (1.0 - yc / (zc * tan_half)) / 2.0 * H - 0.5

    rays = _ray_grid(camera)
    normals = mesh.face_normals
    # plane offset n . (v0 - origin) per face
    v0 = mesh.vertices[mesh.faces[:, 0]]
    plane_d = ((v0 - pos) * normals).sum(axis=1)

    tris = mesh.faces
    for f in range(len(tris)):
        i0, i1, i2 = tris[f]
        if zc[i0] <= 1e-9 or zc[i1] <= 1e-9 or zc[i2] <= 1e-9:
            continue
        xs = px[[i0, i1, i2]]
        ys = py[[i0, i1, i2]]
        x_lo = max(0, int(np.ceil(xs.min())))
        x_hi = min(W - 1, int(np.floor(xs.max())))
        y_lo = max(0, int(np.ceil(ys.min())))
        y_hi = min(H - 1, int(np.floor(ys.max())))
        if x_lo > x_hi or y_lo > y_hi:
            continue

        gx = np.arange(x_lo, x_hi + 1, dtype=np.float64)
        gy = np.arange(y_lo, y_hi + 1, dtype=np.float64)
        mx, my = np.meshgrid(gx, gy)

        e0 = (xs[1] - xs[0]) * (my - ys[0]) - (ys[1] - ys[0]) * (mx - xs[0])
        e1 = (xs[2] - xs[1]) * (my - ys[1]) - (ys[2] - ys[1]) * (mx - xs[1])
        e2 = (xs[0] - xs[2]) * (my - ys[2]) - (ys[0] - ys[2]) * (mx - xs[2])
        inside = ((e0 >= 0) & (e1 >= 0) & (e2 >= 0)) | \
                 ((e0 <= 0) & (e1 <= 0) & (e2 <= 0))
        if not inside.any():
            continue

        d_block = rays[y_lo:y_hi + 1, x_lo:x_hi + 1]
        denom = d_block @ normals[f]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = plane_d[f] / denom
        ok = inside & (np.abs(denom) > 1e-15) & \
            (t >= camera.near) & (t <= camera.far)
        if not ok.any():
            continue

        sub_depth = depth[y_lo:y_hi + 1, x_lo:x_hi + 1]
        sub_face = face_ids[y_lo:y_hi + 1, x_lo:x_hi + 1]
        win = ok & (t < sub_depth)
        sub_depth[win] = t[win]
        sub_face[win] = f

    hit = face_ids != FACE_NONE
    color = np.empty((H, W, 3), dtype=np.uint8)
    color[:] = np.asarray(style.background, dtype=np.uint8)
    if hit.any():
        n_hit = normals[face_ids[hit]]
        cos = np.abs((rays[hit] * n_hit).sum(axis=1))
        albedo = np.asarray(style.albedo, dtype=np.float64)
        shade = np.clip(cos[:, None] * albedo, 0.0, 255.0)
        color[hit] = (shade + 0.5).astype(np.uint8)

    return RenderedView(view_id=view_id, camera=camera, color=color,
                        depth=depth, face_ids=face_ids, mesh=mesh)


MARKER_DEPTH_TOLERANCE = 0.01  # fraction of camera distance


def render_with_marker(mesh: TriangleMesh, camera: Camera, marker,
                       radius: int = 6, view_id: int = 0,
                       style: ShadeStyle = ShadeStyle(),
                       color: tuple[int, int, int] = (255, 0, 0)
                       ) -> RenderedView:
    """Render a view and overpaint a disc at a surface point if visible.

    The marker is visible when its projected depth stays within 1% of the
    camera distance of the depth buffer at its pixel.  Invisible markers
    leave the image untouched and set ``marker_visible`` to False.
    """
    view = render(mesh, camera, view_id=view_id, style=style)
    xyz = np.asarray(getattr(marker, "position", marker), dtype=np.float64)
    try:
        px, py, t = project(camera, xyz)
    except BehindCameraError:
        view.marker_visible = False
        return view
    ix, iy = int(round(px)), int(round(py))
    if not (0 <= ix < camera.width and 0 <= iy < camera.height):
        view.marker_visible = False
        return view
    buffered = view.depth[iy, ix]
    if t > buffered + MARKER_DEPTH_TOLERANCE * camera.distance:
        view.marker_visible = False
        return view

    r = max(0, int(radius))
    y0, y1 = max(0, iy - r), min(camera.height - 1, iy + r)
    x0, x1 = max(0, ix - r), min(camera.width - 1, ix + r)
    gy, gx = np.mgrid[y0:y1 + 1, x0:x1 + 1]
    disc = (gx - ix) ** 2 + (gy - iy) ** 2 <= r * r
    view.color[y0:y1 + 1, x0:x1 + 1][disc] = np.asarray(color, dtype=np.uint8)
    view.marker_visible = True
    return view


# ---------------------------------------------------------------------------
# image / buffer IO


def _encode_png(color: np.ndarray) -> bytes:
    import io

    buf = io.BytesIO()
    Image.fromarray(color, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def save_png(path, color: np.ndarray) -> None:
    Path(path).write_bytes(_encode_png(color))


def load_png(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


_RAW_MAGIC = b"ZKRB"
_RAW_CODES = {np.dtype("float32"): 1, np.dtype("float64"): 2,
              np.dtype("int32"): 3, np.dtype("uint8"): 4}
_RAW_DTYPES = {v: k for k, v in _RAW_CODES.items()}


def save_raw_buffer(path, array: np.ndarray) -> None:
    """Write a 2D buffer as little-endian raw with a small header."""
    array = np.ascontiguousarray(array)
    if array.ndim != 2:
        raise ValueError("raw buffers are 2D")
    code = _RAW_CODES.get(array.dtype)
    if code is None:
        raise ValueError(f"unsupported raw dtype {array.dtype}")
    header = _RAW_MAGIC + struct.pack("<III", array.shape[1],
                                      array.shape[0], code)
    data = array.astype(array.dtype.newbyteorder("<"), copy=False).tobytes()
    Path(path).write_bytes(header + data)


def load_raw_buffer(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if blob[:4] != _RAW_MAGIC or len(blob) < 16:
        raise ValueError(f"{path}: not a raw buffer file")
    w, h, code = struct.unpack("<III", blob[4:16])
    dtype = _RAW_DTYPES.get(code)
    if dtype is None:
        raise ValueError(f"{path}: unknown dtype code {code}")
    expected = 16 + w * h * dtype.itemsize
    if len(blob) != expected:
        raise ValueError(f"{path}: truncated raw buffer")
    arr = np.frombuffer(blob, dtype=dtype.newbyteorder("<"), offset=16)
    return arr.reshape(h, w).astype(dtype)
