"""Posed pinhole views: projection, unprojection and manifest loading.

The projector contract is the module boundary: anything that maps a 3D
point to (u, v, depth) plus image bounds can replace PinholeCamera for the
downstream stages. Pixel centers sit at integer coordinates; (u, v) is
inside the image iff u in [-0.5, width-0.5) and v in [-0.5, height-0.5).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InputError

MANIFEST_KEYS = ("id", "image", "width", "height", "fx", "fy", "cx", "cy", "R", "t")


@dataclass(frozen=True)
class PinholeCamera:
    """Calibrated pinhole camera, world-to-camera convention x_cam = R @ X + t."""

    fx: float
    fy: float
    cx: float
    cy: float
    R: np.ndarray
    t: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)
        if not (self.fx > 0 and self.fy > 0):
            raise InputError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InputError(f"principal point ({self.cx}, {self.cy}) outside image")
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-6:
            raise InputError("camera rotation is not orthonormal (tolerance 1e-6)")

    def center(self) -> np.ndarray:
        """Camera center in world coordinates, -R^T t."""
        return -self.R.T @ self.t

    def project(self, point):
        """Project one world point.

        Returns:
            (u, v, depth) in pixels/model units, or None when the point is
            at or behind the camera plane (z <= 0).
        """
        x = self.R @ np.asarray(point, dtype=np.float64) + self.t
        if x[2] <= 0:
            return None
        return (
            self.fx * x[0] / x[2] + self.cx,
            self.fy * x[1] / x[2] + self.cy,
            x[2],
        )

    def project_points(self, points: np.ndarray):
        """Vectorized projection.

        Args:
            points: (N, 3) world points.

        Returns:
            (uvz, in_front): (N, 3) array of (u, v, depth) and an (N,) bool
            mask. Rows with in_front False hold NaN.
        """
        pts = np.asarray(points, dtype=np.float64)
        x = pts @ self.R.T + self.t
        z = x[:, 2]
        in_front = z > 0
        uvz = np.full((len(pts), 3), np.nan)
        zs = np.where(in_front, z, 1.0)
        uvz[:, 0] = self.fx * x[:, 0] / zs + self.cx
        uvz[:, 1] = self.fy * x[:, 1] / zs + self.cy
        uvz[:, 2] = z
        uvz[~in_front] = np.nan
        return uvz, in_front

    def unproject(self, u: float, v: float, depth: float) -> np.ndarray:
        """Inverse of project for depth > 0."""
        x = np.array(
            [(u - self.cx) / self.fx * depth, (v - self.cy) / self.fy * depth, depth]
        )
        return self.R.T @ (x - self.t)

    def in_bounds(self, u, v):
        """Pixel-center containment test for (u, v) arrays or scalars."""
        return (u >= -0.5) & (u < self.width - 0.5) & (v >= -0.5) & (v < self.height - 0.5)


@dataclass(frozen=True)
class ViewImage:
    """One input view: decoded 8-bit RGB raster plus its camera."""

    id: int
    camera: PinholeCamera
    pixels: np.ndarray = field(repr=False)

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
            raise InputError(f"view {self.id}: pixels must be (H, W, 3) uint8")
        if px.shape[0] != self.camera.height or px.shape[1] != self.camera.width:
            raise InputError(
                f"view {self.id}: image is {px.shape[1]}x{px.shape[0]} but camera "
                f"declares {self.camera.width}x{self.camera.height}"
            )


def _require(entry: dict, idx: int):
    missing = [k for k in MANIFEST_KEYS if k not in entry]
    if missing:
        raise InputError(f"manifest entry {idx}: missing keys {missing}")


def load_views(manifest_path, image_root=None) -> list:
    """Load all views described by a JSON manifest.

    The manifest is a top-level list of objects with keys id, image, width,
    height, fx, fy, cx, cy, R (9 floats row-major), t (3 floats). Image
    paths are resolved against image_root (default: the manifest directory).

    Returns:
        ViewImages in manifest order.

    Raises:
        InputError: Malformed manifest, duplicate ids, missing image files,
            or image dimensions that do not match the declaration.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise InputError(f"view manifest not found: {manifest_path}")
    root = Path(image_root) if image_root is not None else manifest_path.parent
    try:
        entries = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{manifest_path}: invalid JSON: {exc}") from None
    if not isinstance(entries, list):
        raise InputError(f"{manifest_path}: manifest must be a JSON list")
    if not entries:
        raise InputError(f"{manifest_path}: at least one view required")

    views = []
    seen_ids = set()
    for idx, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise InputError(f"{manifest_path}: entry {idx} is not an object")
        _require(entry, idx)
        vid = entry["id"]
        if not isinstance(vid, int):
            raise InputError(f"{manifest_path}: entry {idx}: id must be an integer")
        if vid in seen_ids:
            raise InputError(f"{manifest_path}: duplicate view id {vid}")
        seen_ids.add(vid)
        R = np.asarray(entry["R"], dtype=np.float64)
        t = np.asarray(entry["t"], dtype=np.float64)
        if R.size != 9 or t.size != 3:
            raise InputError(f"{manifest_path}: entry {idx}: R must have 9 entries, t 3")
        camera = PinholeCamera(
            fx=float(entry["fx"]),
            fy=float(entry["fy"]),
            cx=float(entry["cx"]),
            cy=float(entry["cy"]),
            R=R.reshape(3, 3),
            t=t,
            width=int(entry["width"]),
            height=int(entry["height"]),
        )
        img_path = root / entry["image"]
        if not img_path.exists():
            raise InputError(f"view {vid}: image file not found: {img_path}")
        with Image.open(img_path) as im:
            pixels = np.asarray(im.convert("RGB"), dtype=np.uint8)
        views.append(ViewImage(id=vid, camera=camera, pixels=pixels))
    return views
