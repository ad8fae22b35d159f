"""Per-(face, view) texture quality: projected area, color consistency, Q.

The quality score of view l for face F is Q = omega * S, where S is the
visible projected area in pixels and omega in [0, 1] is an unnormalized
Gaussian weight of the view's mean face color against the robust statistics
of all candidate views' mean colors.

Color statistics are computed on colors rescaled to [0, 1] so that the
fixed covariance regularization delta = 1e-4 acts as a noise floor of a few
gray levels; the Gaussian weight itself is scale-free. The rejection test
uses leave-one-out statistics: a single gross outlier inflates any
covariance that includes it enough to mask itself from a self-inclusive
Mahalanobis test, so each view is scored against the statistics of the
remaining inliers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConsistencyError
from .mesh import Mesh
from .parallel import parallel_map
from .visibility import DepthBuffer, FaceVisibility, view_face_stats

logger = logging.getLogger(__name__)

GAUSSIAN_REJECT_THRESHOLD = 0.006  # 8-bit imagery
MEANSHIFT_MAX_ITERS = 10
MIN_INLIERS = 4
COV_REGULARIZATION = 1e-4
COV_STABLE_TOL = 1e-5


@dataclass
class ColorStats:
    """Terminal statistics of the color-consistency loop.

    mu and sigma are in normalized [0, 1] color units; sigma is the
    regularized covariance (Sigma + delta * I) actually used for weighting.
    """

    mu: np.ndarray
    sigma: np.ndarray
    inliers: np.ndarray  # (n,) bool
    iterations: int = 0


@dataclass
class FaceQuality:
    """Quality entries for every view in which one face is visible."""

    face_id: int
    view_ids: np.ndarray  # (n,) int, ascending
    area: np.ndarray  # (n,) float, S
    omega: np.ndarray  # (n,) float in [0, 1]
    q: np.ndarray  # (n,) float, omega * S
    mean_colors: np.ndarray = field(repr=False)  # (n, 3) float in [0, 255]


@dataclass
class QualityTable:
    """Per-face quality lists; None for faces visible in no view."""

    faces: list

    def entry(self, face_id: int) -> FaceQuality | None:
        return self.faces[face_id]

    @property
    def num_faces(self) -> int:
        return len(self.faces)


def projected_area(vis: FaceVisibility) -> float:
    """S for one (face, view): visible-pixel count, or the analytic
    projected-triangle area in pixels^2 for sub-pixel faces."""
    if vis.subpixel:
        return vis.subpixel_area
    return float(vis.visible_count)


def mean_face_color(vis: FaceVisibility, image: np.ndarray) -> np.ndarray:
    """Arithmetic mean RGB over the visible pixels of one footprint.

    Sub-pixel faces sample the single probe pixel. Raises if the face has
    no visible pixel.
    """
    if vis.subpixel:
        px, py = vis.probe
        return image[py, px].astype(np.float64)
    if vis.visible_count == 0:
        raise ConsistencyError(f"face {vis.face_id}: mean color of empty visible set")
    xs = vis.visible_px[:, 0]
    ys = vis.visible_px[:, 1]
    return image[ys, xs].astype(np.float64).mean(axis=0)


def view_quality(area: float, omega: float) -> float:
    """Q = omega * S."""
    return omega * area


def _gaussian_weights(colors: np.ndarray, mu: np.ndarray, sigma_reg: np.ndarray) -> np.ndarray:
    """exp(-(c - mu)^T sigma_reg^{-1} (c - mu) / 2) per row, unnormalized."""
    diff = colors - mu
    sol = np.linalg.solve(sigma_reg, diff.T).T
    m2 = np.einsum("ij,ij->i", diff, sol)
    return np.exp(-0.5 * np.maximum(m2, 0.0))


def _stats(colors: np.ndarray):
    mu = colors.mean(axis=0)
    diff = colors - mu
    sigma = diff.T @ diff / len(colors)
    return mu, sigma + COV_REGULARIZATION * np.eye(3)


def color_consistency(colors: np.ndarray, threshold: float = GAUSSIAN_REJECT_THRESHOLD,
                      max_iters: int = MEANSHIFT_MAX_ITERS):
    """Color-consistency weights for one face's candidate views.

    Iteratively rejects views whose mean color is inconsistent with the
    current inlier population, then weights every view (including rejected
    ones) with the terminal Gaussian.

    Loop: (1) each view is scored against the leave-one-out mean/covariance
    of the current inliers; (2) views scoring below ``threshold`` are marked
    outliers; (3) stop after ``max_iters`` iterations, when the inlier
    covariance changes by less than 1e-5 in every entry, or when fewer than
    4 inliers remain (with fewer than 4 initial views the loop body never
    runs and weights come from the initial statistics).

    Args:
        colors: (n, 3) mean colors in [0, 255].
        threshold: Gaussian-value rejection cutoff.
        max_iters: Refinement iteration cap.

    Returns:
        (omega, ColorStats): (n,) weights in [0, 1] and terminal statistics.
    """
    colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3) / 255.0
    n = len(colors)
    if n == 0:
        raise ValueError("color_consistency needs at least one color")
    if n == 1:
        stats = ColorStats(mu=colors[0].copy(), sigma=COV_REGULARIZATION * np.eye(3),
                           inliers=np.ones(1, dtype=bool))
        return np.ones(1), stats

    inliers = np.ones(n, dtype=bool)
    mu, sigma_reg = _stats(colors)
    prev_sigma = sigma_reg
    iterations = 0

    while iterations < max_iters and int(inliers.sum()) >= MIN_INLIERS:
        iterations += 1
        idx = np.nonzero(inliers)[0]
        sub = colors[idx]
        new_inliers = inliers.copy()
        for k, i in enumerate(idx):
            rest = np.delete(sub, k, axis=0)
            mu_loo, sig_loo = _stats(rest)
            g = _gaussian_weights(colors[i : i + 1], mu_loo, sig_loo)[0]
            if g < threshold:
                new_inliers[i] = False
        if not new_inliers.any():
            break  # refuse to reject everything; keep the previous inlier set
        inliers = new_inliers
        mu, sigma_reg = _stats(colors[inliers])
        if np.abs(sigma_reg - prev_sigma).max() < COV_STABLE_TOL:
            break
        prev_sigma = sigma_reg

    omega = _gaussian_weights(colors, mu, sigma_reg)
    return omega, ColorStats(mu=mu, sigma=sigma_reg, inliers=inliers, iterations=iterations)


def compute_quality_table(
    mesh: Mesh,
    views: list,
    depth_buffers: list,
    bias: float,
    workers: int = 1,
    threshold: float = GAUSSIAN_REJECT_THRESHOLD,
    max_iters: int = MEANSHIFT_MAX_ITERS,
) -> QualityTable:
    """Build the full quality table for a mesh and its views.

    Per view, gathers S and mean colors for all visible faces (z-buffer
    occlusion test, back-face cull), then runs the color-consistency loop
    per face over its visible views.
    """
    per_view = parallel_map(
        lambda iv: view_face_stats(mesh, iv[1], depth_buffers[iv[0]], bias),
        list(enumerate(views)),
        workers,
    )

    by_face = [[] for _ in range(mesh.num_faces)]
    for view, stats in zip(views, per_view):
        for fid, (area, color) in stats.items():
            by_face[fid].append((view.id, area, color))

    def build(face_id: int):
        entries = by_face[face_id]
        if not entries:
            return None
        entries.sort(key=lambda e: e[0])  # ascending view id
        view_ids = np.array([e[0] for e in entries], dtype=np.int64)
        area = np.array([e[1] for e in entries], dtype=np.float64)
        mean_colors = np.array([e[2] for e in entries], dtype=np.float64)
        omega, _ = color_consistency(mean_colors, threshold=threshold, max_iters=max_iters)
        return FaceQuality(
            face_id=face_id,
            view_ids=view_ids,
            area=area,
            omega=omega,
            q=omega * area,
            mean_colors=mean_colors,
        )

    faces = parallel_map(build, range(mesh.num_faces), workers)
    n_empty = sum(1 for f in faces if f is None)
    if n_empty:
        logger.warning("%d of %d faces are visible in no view", n_empty, mesh.num_faces)
    return QualityTable(faces=faces)
