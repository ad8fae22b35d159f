"""Quantitative texture evaluation: re-render each input view from the
textured model and score PSNR / MS-SSIM against the original image.

Metrics run on coverage-masked pixels (background excluded); unmasked
variants are reported alongside for comparison. PSNR is capped at 99 dB so
dataset means stay finite.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import ndimage

from .atlas import TexturedModel
from .blend import bilinear_sample
from .parallel import parallel_map
from .visibility import rasterize_depth, triangle_coverage, _rasterizable_faces

logger = logging.getLogger(__name__)

PSNR_CAP = 99.0
MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
DYNAMIC_RANGE = 255.0


def render_virtual(model: TexturedModel, view) -> tuple:
    """Rasterize the textured model into a view's camera.

    Uses the same z-buffer rasterizer as the visibility stage; texture
    lookups are bilinear with perspective-correct UV interpolation.
    Background pixels are black.

    Returns:
        (image, coverage): (H, W, 3) uint8 render and (H, W) bool mask of
        pixels covered by geometry.
    """
    camera = getattr(view, "camera", view)
    mesh = model.mesh
    atlas = model.atlas
    buf = rasterize_depth(mesh, camera)
    coverage = buf.face >= 0
    out = np.zeros((camera.height, camera.width, 3), dtype=np.uint8)
    if not coverage.any():
        return out, coverage

    tri_uvz, ok = _rasterizable_faces(mesh, camera)
    drawn = np.unique(buf.face[coverage])
    for fid in drawn:
        cov = triangle_coverage(tri_uvz[fid], camera.width, camera.height)
        if cov is None:
            continue
        xs, ys, _, bary = cov
        own = buf.face[ys, xs] == fid
        if not own.any():
            continue
        xs = xs[own]
        ys = ys[own]
        bary = bary[own]
        z = tri_uvz[fid, :, 2]
        # perspective-correct UV: weight screen barycentric by 1/z
        bw = bary / z[None, :]
        bw /= bw.sum(axis=1)[:, None]
        uv = bw @ atlas.uv[fid]
        page = atlas.pages[int(atlas.page[fid])]
        side_y, side_x = page.shape[:2]
        px = uv[:, 0] * side_x - 0.5
        py = (1.0 - uv[:, 1]) * side_y - 0.5
        out[ys, xs] = np.clip(np.rint(bilinear_sample(page, px, py)), 0, 255).astype(np.uint8)
    return out, coverage


def psnr(a: np.ndarray, b: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Peak signal-to-noise ratio over masked RGB values, in dB, capped at 99.

    Raises:
        ValueError: Shape mismatch or empty mask.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    diff = a.astype(np.float64) - b.astype(np.float64)
    if mask is not None:
        if not np.any(mask):
            raise ValueError("psnr: empty mask")
        diff = diff[mask]
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(DYNAMIC_RANGE * DYNAMIC_RANGE / mse))


def _to_gray(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    half = len(window) // 2
    out = ndimage.correlate1d(img, window, axis=0, mode="constant")
    out = ndimage.correlate1d(out, window, axis=1, mode="constant")
    return out[half:-half, half:-half]


def _ssim_cs(a: np.ndarray, b: np.ndarray, window: np.ndarray):
    """Mean SSIM and contrast-structure terms of one scale."""
    c1 = (SSIM_K1 * DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * DYNAMIC_RANGE) ** 2
    mu_a = _filter_valid(a, window)
    mu_b = _filter_valid(b, window)
    var_a = _filter_valid(a * a, window) - mu_a * mu_a
    var_b = _filter_valid(b * b, window) - mu_b * mu_b
    cov = _filter_valid(a * b, window) - mu_a * mu_b
    cs_map = (2.0 * cov + c2) / (var_a + var_b + c2)
    ssim_map = ((2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1)) * cs_map
    return float(ssim_map.mean()), float(cs_map.mean())


def _downsample2(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    img = img[: h - h % 2, : w - w % 2]
    return (img[0::2, 0::2] + img[0::2, 1::2] + img[1::2, 0::2] + img[1::2, 1::2]) / 4.0


def ms_ssim(
    a: np.ndarray,
    b: np.ndarray,
    mask: np.ndarray | None = None,
    return_scales: bool = False,
):
    """Multiscale structural similarity on the grayscale images.

    Standard 5-scale MS-SSIM (11x11 Gaussian window sigma 1.5, Wang's scale
    weights, K1=0.01, K2=0.03, dynamic range 255). With a mask, both images
    are cropped to the mask's bounding box and pixels outside the mask are
    zeroed in both. When the (cropped) image is too small for 5 dyadic
    scales, fewer scales are used and their weights renormalized.

    Returns:
        Value in [0, 1]; with return_scales=True, (value, scales_used).

    Raises:
        ValueError: Shape mismatch, empty mask, or image smaller than the
            filter window.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    ga = _to_gray(a)
    gb = _to_gray(b)
    if mask is not None:
        if not np.any(mask):
            raise ValueError("ms_ssim: empty mask")
        ys, xs = np.nonzero(mask)
        y0, y1 = ys.min(), ys.max() + 1
        x0, x1 = xs.min(), xs.max() + 1
        sub = mask[y0:y1, x0:x1]
        ga = np.where(sub, ga[y0:y1, x0:x1], 0.0)
        gb = np.where(sub, gb[y0:y1, x0:x1], 0.0)

    min_side = min(ga.shape)
    if min_side < SSIM_WINDOW:
        raise ValueError(f"ms_ssim: image side {min_side} smaller than window {SSIM_WINDOW}")
    scales = min(len(MSSSIM_WEIGHTS), int(np.floor(np.log2(min_side / SSIM_WINDOW))) + 1)
    scales = max(scales, 1)
    weights = np.asarray(MSSSIM_WEIGHTS[:scales])
    weights = weights / weights.sum()

    window = _gaussian_window()
    mcs = []
    ssim_val = 1.0
    for s in range(scales):
        ssim_val, cs = _ssim_cs(ga, gb, window)
        mcs.append(cs)
        if s < scales - 1:
            ga = _downsample2(ga)
            gb = _downsample2(gb)

    terms = np.array(mcs[:-1] + [ssim_val])
    terms = np.maximum(terms, 0.0)
    value = float(np.prod(terms**weights))
    if return_scales:
        return value, scales
    return value


@dataclass
class ViewScore:
    """Metrics for one evaluated view."""

    view_id: int
    psnr: float
    ms_ssim: float
    psnr_unmasked: float
    ms_ssim_unmasked: float
    coverage_fraction: float
    scales_used: int


@dataclass
class EvalReport:
    """Dataset-level evaluation: per-view scores plus arithmetic means."""

    views: list
    mean_psnr: float
    mean_ms_ssim: float
    mean_psnr_unmasked: float
    mean_ms_ssim_unmasked: float
    evaluated_views: int
    skipped_views: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "views": [asdict(v) for v in self.views],
            "mean_psnr": self.mean_psnr,
            "mean_ms_ssim": self.mean_ms_ssim,
            "mean_psnr_unmasked": self.mean_psnr_unmasked,
            "mean_ms_ssim_unmasked": self.mean_ms_ssim_unmasked,
            "evaluated_views": self.evaluated_views,
            "skipped_views": self.skipped_views,
        }


def evaluate_dataset(model: TexturedModel, views: list, workers: int = 1) -> EvalReport:
    """Render every input view from the model and score it.

    Views whose render has empty coverage are skipped and excluded from the
    means.

    Raises:
        ValueError: Fewer than one view, or no view with coverage.
    """
    if not views:
        raise ValueError("evaluate_dataset: at least one view required")

    def score(view):
        render, coverage = render_virtual(model, view)
        if not coverage.any():
            return view.id, None
        masked_psnr = psnr(render, view.pixels, coverage)
        masked_ssim, scales = ms_ssim(render, view.pixels, coverage, return_scales=True)
        return view.id, ViewScore(
            view_id=view.id,
            psnr=masked_psnr,
            ms_ssim=masked_ssim,
            psnr_unmasked=psnr(render, view.pixels),
            ms_ssim_unmasked=ms_ssim(render, view.pixels),
            coverage_fraction=float(coverage.mean()),
            scales_used=scales,
        )

    results = parallel_map(score, views, workers)
    scored = [s for _, s in results if s is not None]
    skipped = [vid for vid, s in results if s is None]
    if not scored:
        raise ValueError("evaluate_dataset: no view has model coverage")
    scored.sort(key=lambda s: s.view_id)
    return EvalReport(
        views=scored,
        mean_psnr=float(np.mean([s.psnr for s in scored])),
        mean_ms_ssim=float(np.mean([s.ms_ssim for s in scored])),
        mean_psnr_unmasked=float(np.mean([s.psnr_unmasked for s in scored])),
        mean_ms_ssim_unmasked=float(np.mean([s.ms_ssim_unmasked for s in scored])),
        evaluated_views=len(scored),
        skipped_views=skipped,
    )
