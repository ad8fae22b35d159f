"""Per-view depth rasterization and per-(face, view) occlusion tests.

The rasterizer is a plain software z-buffer: pixel centers sit at integer
coordinates, coverage is a pixel-center-in-triangle test, and depth is
interpolated perspective-correctly (1/z barycentric in screen space).
Faces crossing the camera plane (any corner at z <= 0) are skipped, not
clipped. Equal-depth ties go to the smaller face id.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import PinholeCamera
from .mesh import Mesh
from .parallel import parallel_map

DEFAULT_DEPTH_BIAS = 1e-3


@dataclass
class DepthBuffer:
    """Nearest-depth raster for one view.

    Attributes:
        depth: (H, W) float64, +inf where no face projects.
        face: (H, W) int32 face id of the nearest face, -1 where empty.
    """

    depth: np.ndarray
    face: np.ndarray


@dataclass
class FaceVisibility:
    """Occlusion-test result for one (face, view) pair.

    visible_px holds (x, y) integer pixel coordinates inside the projected
    footprint that pass the z-test. Sub-pixel faces (no covered pixel
    center) carry an analytic projected area and a single probe pixel used
    for color sampling instead.
    """

    face_id: int
    view_id: int
    visible_px: np.ndarray = field(repr=False)
    footprint_pixels: int = 0
    subpixel: bool = False
    subpixel_area: float = 0.0
    probe: tuple | None = None

    @property
    def visible_count(self) -> int:
        return len(self.visible_px)

    @property
    def is_visible(self) -> bool:
        return self.visible_count >= 1 or self.subpixel


_EMPTY_PX = np.zeros((0, 2), dtype=np.int32)


def _empty_vis(face_id: int, view_id: int) -> FaceVisibility:
    return FaceVisibility(face_id=face_id, view_id=view_id, visible_px=_EMPTY_PX)


def triangle_coverage(uvz: np.ndarray, width: int, height: int):
    """Covered pixel centers of one projected triangle.

    Args:
        uvz: (3, 3) rows of (u, v, depth) per corner, all depths > 0.
        width, height: Image bounds in pixels.

    Returns:
        (xs, ys, depth, bary) with int arrays xs/ys, perspective-correct
        depth and (M, 3) screen-space barycentric weights, or None when no
        pixel center is covered.
    """
    u = uvz[:, 0]
    v = uvz[:, 1]
    z = uvz[:, 2]
    x0 = max(0, int(np.ceil(u.min() - 1e-9)))
    x1 = min(width - 1, int(np.floor(u.max() + 1e-9)))
    y0 = max(0, int(np.ceil(v.min() - 1e-9)))
    y1 = min(height - 1, int(np.floor(v.max() + 1e-9)))
    if x0 > x1 or y0 > y1:
        return None
    denom = (u[1] - u[0]) * (v[2] - v[0]) - (v[1] - v[0]) * (u[2] - u[0])
    if abs(denom) < 1e-12:
        return None

    xs = np.arange(x0, x1 + 1, dtype=np.float64) - u[0]
    ys = np.arange(y0, y1 + 1, dtype=np.float64) - v[0]
    du1, dv1 = u[1] - u[0], v[1] - v[0]
    du2, dv2 = u[2] - u[0], v[2] - v[0]
    w1 = (xs[None, :] * dv2 - ys[:, None] * du2) / denom
    w2 = (ys[:, None] * du1 - xs[None, :] * dv1) / denom
    w0 = 1.0 - w1 - w2
    inside = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
    iy, ix = np.nonzero(inside)
    if len(iy) == 0:
        return None
    b0 = w0[iy, ix]
    b1 = w1[iy, ix]
    b2 = w2[iy, ix]
    depth = 1.0 / (b0 / z[0] + b1 / z[1] + b2 / z[2])
    return (
        (ix + x0).astype(np.int32),
        (iy + y0).astype(np.int32),
        depth,
        np.stack([b0, b1, b2], axis=1),
    )


def projected_triangle_area(uvz: np.ndarray) -> float:
    """Analytic area of the projected triangle in pixels^2."""
    u = uvz[:, 0]
    v = uvz[:, 1]
    denom = (u[1] - u[0]) * (v[2] - v[0]) - (v[1] - v[0]) * (u[2] - u[0])
    return abs(denom) / 2.0


def front_facing(mesh: Mesh, camera: PinholeCamera) -> np.ndarray:
    """(F,) bool: faces whose normal points toward the camera.

    A face is back-facing when normal . (centroid - camera_center) >= 0;
    edge-on faces count as back-facing.
    """
    dirs = mesh.centroids() - camera.center()
    return np.einsum("ij,ij->i", mesh.face_normals, dirs) < 0.0


def _rasterizable_faces(mesh: Mesh, camera: PinholeCamera):
    """Projected corner uvz per face plus the mask of drawable faces."""
    uvz, in_front = camera.project_points(mesh.vertices)
    tri_uvz = uvz[mesh.faces]  # (F, 3, 3)
    ok = in_front[mesh.faces].all(axis=1) & front_facing(mesh, camera)
    return tri_uvz, ok


def rasterize_depth(mesh: Mesh, view) -> DepthBuffer:
    """Render a z-buffer of the mesh into one view.

    Only front-facing triangles are drawn. Empty pixels are +inf / face -1.

    Args:
        view: ViewImage or bare PinholeCamera.
    """
    camera = getattr(view, "camera", view)
    depth = np.full((camera.height, camera.width), np.inf)
    face = np.full((camera.height, camera.width), -1, dtype=np.int32)
    if mesh.num_faces == 0:
        return DepthBuffer(depth=depth, face=face)

    tri_uvz, ok = _rasterizable_faces(mesh, camera)
    for fid in np.nonzero(ok)[0]:
        cov = triangle_coverage(tri_uvz[fid], camera.width, camera.height)
        if cov is None:
            continue
        xs, ys, d, _ = cov
        cur = depth[ys, xs]
        upd = d < cur  # strict: ascending fid order keeps the smaller id on ties
        if upd.any():
            depth[ys[upd], xs[upd]] = d[upd]
            face[ys[upd], xs[upd]] = fid
    return DepthBuffer(depth=depth, face=face)


def rasterize_all_views(mesh: Mesh, views, workers: int = 1) -> list:
    """Depth buffers for every view, deterministically, optionally threaded."""
    return parallel_map(lambda v: rasterize_depth(mesh, v), views, workers)


def face_visibility(
    mesh: Mesh,
    face_id: int,
    view,
    depth: DepthBuffer,
    bias: float = DEFAULT_DEPTH_BIAS,
) -> FaceVisibility:
    """Classify the visible part of one face's footprint in one view.

    A footprint pixel p is visible iff depth_face(p) <= buffer(p) * (1 +
    bias). Back-facing faces have an empty visible set. Faces with an empty
    footprint fall back to a centroid probe: visible iff the probe pixel
    passes the z-test, with the analytic projected area standing in for the
    pixel count.
    """
    camera = getattr(view, "camera", view)
    view_id = getattr(view, "id", -1)
    uvz, in_front = camera.project_points(mesh.face_points(face_id))
    if not in_front.all():
        return _empty_vis(face_id, view_id)
    centroid = mesh.centroids()[face_id]
    if float(np.dot(mesh.face_normals[face_id], centroid - camera.center())) >= 0.0:
        return _empty_vis(face_id, view_id)

    cov = triangle_coverage(uvz, camera.width, camera.height)
    if cov is None:
        # Sub-pixel footprint: probe the projected centroid's pixel.
        area = projected_triangle_area(uvz)
        if area <= 0.0:
            return _empty_vis(face_id, view_id)
        pu = float(uvz[:, 0].mean())
        pv = float(uvz[:, 1].mean())
        if not camera.in_bounds(pu, pv):
            return _empty_vis(face_id, view_id)
        px = int(np.floor(pu + 0.5))
        py = int(np.floor(pv + 0.5))
        d_probe = 3.0 / (1.0 / uvz[0, 2] + 1.0 / uvz[1, 2] + 1.0 / uvz[2, 2])
        if d_probe <= depth.depth[py, px] * (1.0 + bias):
            return FaceVisibility(
                face_id=face_id,
                view_id=view_id,
                visible_px=_EMPTY_PX,
                footprint_pixels=0,
                subpixel=True,
                subpixel_area=area,
                probe=(px, py),
            )
        return _empty_vis(face_id, view_id)

    xs, ys, d, _ = cov
    vis = d <= depth.depth[ys, xs] * (1.0 + bias)
    visible_px = np.stack([xs[vis], ys[vis]], axis=1).astype(np.int32)
    return FaceVisibility(
        face_id=face_id,
        view_id=view_id,
        visible_px=visible_px,
        footprint_pixels=len(xs),
    )


def view_face_stats(mesh: Mesh, view, depth: DepthBuffer, bias: float = DEFAULT_DEPTH_BIAS):
    """Fused per-face visibility statistics for one view.

    One pass over all faces computing, for each visible face: the projected
    area proxy S (visible-pixel count, or analytic area for sub-pixel
    faces) and the mean RGB color over visible pixels.

    Returns:
        dict face_id -> (S: float, mean_color: (3,) float64).
    """
    camera = view.camera
    img = view.pixels
    tri_uvz, ok = _rasterizable_faces(mesh, camera)
    stats = {}
    for fid in np.nonzero(ok)[0]:
        cov = triangle_coverage(tri_uvz[fid], camera.width, camera.height)
        if cov is None:
            area = projected_triangle_area(tri_uvz[fid])
            if area <= 0.0:
                continue
            pu = float(tri_uvz[fid, :, 0].mean())
            pv = float(tri_uvz[fid, :, 1].mean())
            if not camera.in_bounds(pu, pv):
                continue
            px = int(np.floor(pu + 0.5))
            py = int(np.floor(pv + 0.5))
            z = tri_uvz[fid, :, 2]
            d_probe = 3.0 / (1.0 / z).sum()
            if d_probe <= depth.depth[py, px] * (1.0 + bias):
                stats[int(fid)] = (float(area), img[py, px].astype(np.float64))
            continue
        xs, ys, d, _ = cov
        vis = d <= depth.depth[ys, xs] * (1.0 + bias)
        n_vis = int(np.count_nonzero(vis))
        if n_vis == 0:
            continue
        colors = img[ys[vis], xs[vis]].astype(np.float64)
        stats[int(fid)] = (float(n_vis), colors.mean(axis=0))
    return stats
