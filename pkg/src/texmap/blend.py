"""Multi-view texture fusion with distance-transform weights.

For every view, one binary mask marks the pixels that any face's retained
candidate uses; its exact Euclidean distance transform (distance to the
nearest invalid pixel, image border counts as invalid) then weights that
view during per-face blending: pixels deep inside a view's valid region
dominate, pixels near mask borders fade out, which removes hard seams
between faces that blend different view subsets.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .mesh import Mesh
from .parallel import parallel_map
from .visibility import DepthBuffer, face_visibility

logger = logging.getLogger(__name__)

TEXEL_RES_MIN = 4
TEXEL_RES_MAX = 256


@dataclass
class ViewMask:
    """Valid-pixel mask of one view: union of the visible footprints of all
    faces that retained the view as a blend candidate."""

    view_id: int
    mask: np.ndarray = field(repr=False)  # (H, W) bool


@dataclass
class DistanceMap:
    """Exact Euclidean distance to the nearest invalid pixel.

    squared holds exact integer squared distances; dist their square roots.
    Invalid pixels are 0. Pixels outside the image count as invalid, so
    distances are bounded by the distance to the image border.
    """

    dist: np.ndarray = field(repr=False)  # (H, W) float64
    squared: np.ndarray = field(repr=False)  # (H, W) int64


@dataclass
class FacePatch:
    """Blended texture for one face on an R x R texel grid.

    Texel (r, c) covers barycentric (u, v) = ((c + .5)/R, (r + .5)/R) with
    u along corner0->corner1 and v along corner0->corner2; texels with
    r + c <= R - 1 lie inside the triangle. audit records the post-
    normalization weight sum per covered texel (1 up to rounding);
    fallback_count counts texels filled from a neighbor because no
    candidate projected in bounds.
    """

    face_id: int
    resolution: int
    rgb: np.ndarray = field(repr=False)  # (R, R, 3) float32
    covered: np.ndarray = field(repr=False)  # (R, R) bool
    audit: np.ndarray = field(repr=False)  # (R, R) float32
    fallback_count: int = 0


def bilinear_sample(image: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bilinear sample with clamp-to-edge, channels preserved.

    Args:
        image: (H, W) or (H, W, C) array.
        x, y: Sample positions in pixel-center coordinates.

    Returns:
        (N,) or (N, C) float64 samples.
    """
    h, w = image.shape[:2]
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, w - 1.0)
    y = np.clip(np.asarray(y, dtype=np.float64), 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    img = image.astype(np.float64, copy=False)
    if image.ndim == 3:
        fx = fx[:, None]
        fy = fy[:, None]
    return (
        img[y0, x0] * (1 - fx) * (1 - fy)
        + img[y0, x1] * fx * (1 - fy)
        + img[y1, x0] * (1 - fx) * fy
        + img[y1, x1] * fx * fy
    )


def build_masks(
    mesh: Mesh,
    views: list,
    depth_buffers: list,
    candidates,
    bias: float,
    workers: int = 1,
) -> list:
    """Union valid-pixel mask per view over retained (face, view) pairs.

    Args:
        candidates: CandidateSet from the MRF stage.

    Returns:
        ViewMasks aligned with ``views``.
    """
    retained = {view.id: [] for view in views}
    for fid in range(candidates.num_faces):
        for vid in candidates.view_ids[fid]:
            retained[int(vid)].append(fid)

    def build(iv):
        idx, view = iv
        mask = np.zeros((view.camera.height, view.camera.width), dtype=bool)
        for fid in retained[view.id]:
            vis = face_visibility(mesh, fid, view, depth_buffers[idx], bias)
            if vis.visible_count:
                mask[vis.visible_px[:, 1], vis.visible_px[:, 0]] = True
            elif vis.subpixel:
                px, py = vis.probe
                mask[py, px] = True
        return ViewMask(view_id=view.id, mask=mask)

    return parallel_map(build, list(enumerate(views)), workers)


def distance_transform(mask: np.ndarray) -> DistanceMap:
    """Exact L2 distance transform of a binary mask.

    Distances are measured from each valid (True) pixel to the nearest
    invalid (False) pixel; everything outside the image is invalid too.
    Squared distances are exact integers (nearest-invalid coordinates from
    the exact feature transform, squared in integer arithmetic).
    """
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    padded = np.zeros((h + 2, w + 2), dtype=bool)
    padded[1:-1, 1:-1] = mask
    if not padded.any():
        squared = np.zeros((h, w), dtype=np.int64)
        return DistanceMap(dist=np.zeros((h, w)), squared=squared)
    ind = ndimage.distance_transform_edt(padded, return_distances=False, return_indices=True)
    rows = np.arange(h + 2, dtype=np.int64)[:, None]
    cols = np.arange(w + 2, dtype=np.int64)[None, :]
    squared = (ind[0].astype(np.int64) - rows) ** 2 + (ind[1].astype(np.int64) - cols) ** 2
    squared = squared[1:-1, 1:-1]
    return DistanceMap(dist=np.sqrt(squared.astype(np.float64)), squared=squared)


def texel_resolution(best_area: float, lo: int = TEXEL_RES_MIN, hi: int = TEXEL_RES_MAX) -> int:
    """Patch resolution from the best retained view's projected area."""
    r = int(np.ceil(np.sqrt(max(2.0 * best_area, 1.0))))
    return int(np.clip(r, lo, hi))


def blend_face(
    mesh: Mesh,
    face_id: int,
    cand_view_ids,
    views_by_id: dict,
    dist_by_id: dict,
    resolution: int,
) -> FacePatch:
    """Blend the retained candidate views into one face texture.

    Per texel: interpolate the 3D point, project into every candidate,
    sample color and distance-transform weight bilinearly, normalize the
    weights to sum 1 and mix. Texels whose projections all carry zero
    weight fall back to equal weights over in-bounds candidates; texels
    with no in-bounds projection at all are filled from the nearest
    resolved texel.

    Args:
        cand_view_ids: View ids ascending by candidate rank.
        views_by_id: view id -> ViewImage.
        dist_by_id: view id -> DistanceMap over that view's blend mask.
        resolution: Texel grid resolution R >= 1.

    Returns:
        FacePatch with float32 colors.
    """
    if resolution < 1:
        raise ValueError(f"resolution must be >= 1, got {resolution}")
    if len(cand_view_ids) == 0:
        raise ValueError(f"face {face_id}: no candidates to blend")
    r = resolution
    rows, cols = np.nonzero(np.add.outer(np.arange(r), np.arange(r)) <= r - 1)
    u = (cols + 0.5) / r
    v = (rows + 0.5) / r
    corners = mesh.face_points(face_id)
    points = corners[0] + u[:, None] * (corners[1] - corners[0]) + v[:, None] * (
        corners[2] - corners[0]
    )
    n_tex = len(points)

    weights = np.zeros((len(cand_view_ids), n_tex))
    colors = np.zeros((len(cand_view_ids), n_tex, 3))
    in_bounds = np.zeros((len(cand_view_ids), n_tex), dtype=bool)
    for k, vid in enumerate(cand_view_ids):
        view = views_by_id[int(vid)]
        uvz, in_front = view.camera.project_points(points)
        ok = in_front & view.camera.in_bounds(uvz[:, 0], uvz[:, 1])
        if not ok.any():
            continue
        px = uvz[ok, 0]
        py = uvz[ok, 1]
        w = bilinear_sample(dist_by_id[int(vid)].dist, px, py)
        weights[k, ok] = np.maximum(w, 0.0)
        colors[k, ok] = bilinear_sample(view.pixels, px, py)
        in_bounds[k, ok] = True

    wsum = weights.sum(axis=0)
    blended = np.zeros((n_tex, 3))
    audit = np.zeros(n_tex)

    direct = wsum > 0.0
    if direct.any():
        norm = weights[:, direct] / wsum[direct]
        blended[direct] = np.einsum("kt,ktc->tc", norm, colors[:, direct])
        audit[direct] = norm.sum(axis=0)

    # zero total weight but some in-bounds projection: equal weights
    eq = ~direct & in_bounds.any(axis=0)
    if eq.any():
        counts = in_bounds[:, eq].sum(axis=0)
        blended[eq] = np.einsum("kt,ktc->tc", in_bounds[:, eq].astype(np.float64), colors[:, eq])
        blended[eq] /= counts[:, None]
        audit[eq] = 1.0

    resolved = direct | eq
    fallback_count = int(n_tex - np.count_nonzero(resolved))
    rgb = np.zeros((r, r, 3), dtype=np.float32)
    covered = np.zeros((r, r), dtype=bool)
    audit_grid = np.zeros((r, r), dtype=np.float32)
    rgb[rows, cols] = blended.astype(np.float32)
    covered[rows, cols] = True
    audit_grid[rows, cols] = audit.astype(np.float32)

    if fallback_count:
        if resolved.any():
            # fill unresolved texels from the nearest resolved one
            res_grid = np.zeros((r, r), dtype=bool)
            res_grid[rows[resolved], cols[resolved]] = True
            ind = ndimage.distance_transform_edt(
                ~res_grid, return_distances=False, return_indices=True
            )
            bad_r = rows[~resolved]
            bad_c = cols[~resolved]
            rgb[bad_r, bad_c] = rgb[ind[0][bad_r, bad_c], ind[1][bad_r, bad_c]]
            audit_grid[bad_r, bad_c] = 1.0
        else:
            logger.warning("face %d: no candidate projection in bounds, gray patch", face_id)
            rgb[rows, cols] = 128.0
            audit_grid[rows, cols] = 1.0

    return FacePatch(
        face_id=face_id,
        resolution=r,
        rgb=rgb,
        covered=covered,
        audit=audit_grid,
        fallback_count=fallback_count,
    )
