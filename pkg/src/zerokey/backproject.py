"""Lift 2D detections onto the mesh surface.

Rendering already intersected every pixel-center ray with the mesh and
cached the ray parameter t, so lifting a detection is a lookup: the 3D
point is ``origin + t * direction`` for the pixel's ray.  Detections are
continuous coordinates; they are rounded to the nearest pixel center.

Single-pixel lifts can be badly conditioned at grazing incidence, so the
patch variant averages an h x h window of back-projected pixels (pixels
whose rays miss the mesh are excluded) and re-anchors the mean to the
surface.  Background pixels lift to None, which is an answer, not an
error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidPatchError
from .mesh import (
    SurfacePoint,
    TriangleMesh,
    nearest_surface_point,
)
from .render import FACE_NONE, RenderedView, unproject_ray

__all__ = ["LiftedPoint", "backproject_pixel", "backproject_patch",
           "unproject_ray"]


@dataclass(frozen=True)
class LiftedPoint:
    """A detection lifted to 3D.

    position is the on-surface location (equal to the anchor's position);
    mean_position keeps the raw patch average before re-anchoring, which
    generally leaves the surface.  patch_support counts the finite-depth
    pixels that contributed.
    """

    position: tuple[float, float, float]
    anchor: SurfacePoint
    view_id: int
    prompt_id: int
    patch_support: int
    mean_position: tuple[float, float, float]

    @property
    def xyz(self) -> np.ndarray:
        return np.asarray(self.position, dtype=np.float64)


def _round_pixel(view: RenderedView, pixel) -> tuple[int, int]:
    px, py = float(pixel[0]), float(pixel[1])
    ix = int(round(px))
    iy = int(round(py))
    ix = min(max(ix, 0), view.camera.width - 1)
    iy = min(max(iy, 0), view.camera.height - 1)
    return ix, iy


def backproject_pixel(view: RenderedView, pixel, view_id: int | None = None,
                      prompt_id: int = 0) -> LiftedPoint | None:
    """Lift one pixel through the cached depth; None on background.

    The surface anchor is the recorded face with the hit point's
    barycentric weights clamped onto it, so the anchor always lies on the
    mesh even when the cached hit drifted off the face plane numerically.
    """
    mesh = _mesh_of(view)
    ix, iy = _round_pixel(view, pixel)
    t = view.depth[iy, ix]
    if not np.isfinite(t):
        return None
    origin, direction = unproject_ray(view.camera, (float(ix), float(iy)))
    hit = origin + t * direction
    face = int(view.face_ids[iy, ix])
    anchor = _anchor_on_face(mesh, face, hit)
    if view_id is None:
        view_id = view.view_id
    return LiftedPoint(position=anchor.position, anchor=anchor,
                       view_id=view_id, prompt_id=prompt_id,
                       patch_support=1, mean_position=tuple(hit.tolist()))


def backproject_patch(view: RenderedView, pixel, patch_size: int = 5,
                      view_id: int | None = None,
                      prompt_id: int = 0) -> LiftedPoint | None:
    """Lift an h x h pixel window and average the surface hits.

    h must be a positive odd integer; h=1 reduces exactly to
    backproject_pixel.  The window is clipped at the image border.  Rays
    that miss the mesh are excluded from the mean; if every pixel in the
    window misses, the answer is None.  The anchor re-projects the mean
    onto the nearest surface point of the whole mesh.
    """
    h = patch_size
    if not isinstance(h, (int, np.integer)) or h <= 0 or h % 2 == 0:
        raise InvalidPatchError(f"patch size must be a positive odd int, got {h}")
    if h == 1:
        return backproject_pixel(view, pixel, view_id=view_id,
                                 prompt_id=prompt_id)

    mesh = _mesh_of(view)
    cam = view.camera
    ix, iy = _round_pixel(view, pixel)
    r = h // 2
    x0, x1 = max(0, ix - r), min(cam.width - 1, ix + r)
    y0, y1 = max(0, iy - r), min(cam.height - 1, iy + r)

    depth = view.depth[y0:y1 + 1, x0:x1 + 1]
    finite = np.isfinite(depth)
    support = int(finite.sum())
    if support == 0:
        return None

    rays = _window_rays(cam, x0, x1, y0, y1)
    origin = np.asarray(cam.position, dtype=np.float64)
    hits = origin + depth[finite][:, None] * rays[finite]
    mean = hits.mean(axis=0)
    anchor = nearest_surface_point(mesh, mean)
    if view_id is None:
        view_id = view.view_id
    return LiftedPoint(position=anchor.position, anchor=anchor,
                       view_id=view_id, prompt_id=prompt_id,
                       patch_support=support, mean_position=tuple(mean.tolist()))


def _window_rays(cam, x0, x1, y0, y1) -> np.ndarray:
    right, up, fwd = cam.basis()
    tan_half = np.tan(cam.fov / 2.0)
    aspect = cam.width / cam.height
    xs = (np.arange(x0, x1 + 1) + 0.5) * 2.0 / cam.width - 1.0
    ys = 1.0 - (np.arange(y0, y1 + 1) + 0.5) * 2.0 / cam.height
    gx, gy = np.meshgrid(xs * tan_half * aspect, ys * tan_half)
    d = gx[..., None] * right + gy[..., None] * up + fwd
    d /= np.sqrt((d ** 2).sum(axis=2))[..., None]
    return d


def _anchor_on_face(mesh: TriangleMesh, face: int, point) -> SurfacePoint:
    """Project a point onto one known face, clamping to the triangle."""
    from .mesh import _closest_point_barycentric

    tri = mesh.faces[face]
    a = mesh.vertices[tri[0]][None, :]
    b = mesh.vertices[tri[1]][None, :]
    c = mesh.vertices[tri[2]][None, :]
    bary = _closest_point_barycentric(np.asarray(point, dtype=np.float64),
                                      a, b, c)[0]
    pos = bary[0] * a[0] + bary[1] * b[0] + bary[2] * c[0]
    return SurfacePoint(tuple(pos.tolist()), int(face), tuple(bary.tolist()))


def _mesh_of(view: RenderedView) -> TriangleMesh:
    mesh = getattr(view, "mesh", None)
    if mesh is None:
        raise ValueError("view carries no mesh reference; render() attaches one")
    return mesh
