"""Deterministic classical line segmentation built around quadratic line fits.

Pre-processing denoises with total variation and enhances contrast with a
white top-hat of the inverted page (ink becomes bright). Detection blurs
with a wide, short box kernel, splits the page into column bands from the
column profile, thresholds each band with Otsu and fits a quadratic
through the midpoints of every blob. The extrapolated curves, dilated by a
flat ellipse, form the initial line regions. Post-processing re-thresholds
the contrast image and hands each resulting component to the region it
overlaps most, discarding components larger than the calibrated area
threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .filters import elongated_blur, otsu_threshold, tv_denoise
from .raster import (
    Component,
    StructuringElement,
    as_gray,
    components_of,
    dilate,
    label_components,
    normalize_labels,
    to_grayscale,
    top_hat,
)

__all__ = [
    "ColumnBand",
    "BlobCurve",
    "GpiConfig",
    "gpi_preprocess",
    "detect_columns",
    "detect_blobs",
    "fit_blob_curves",
    "build_initial_mask",
    "nearest_rank_percentile",
    "compute_area_threshold",
    "gt_component_areas",
    "estimate_line_height",
    "refine_components",
    "run_gpi",
]


@dataclass(frozen=True)
class ColumnBand:
    x_start: int
    x_end: int  # exclusive

    def __post_init__(self):
        if not 0 <= self.x_start < self.x_end:
            raise ValueError(f"invalid band [{self.x_start}, {self.x_end})")

    def contains(self, x: float) -> bool:
        return self.x_start <= x < self.x_end


@dataclass(frozen=True)
class BlobCurve:
    coeffs: tuple[float, float, float]  # y = a x^2 + b x + c
    x_range: tuple[int, int]  # inclusive fitted extent
    source_blob: Component | None = None

    def __call__(self, x):
        a, b, c = self.coeffs
        x = np.asarray(x, dtype=np.float64)
        return (a * x + b) * x + c


@dataclass(frozen=True)
class GpiConfig:
    tv_weight: float = 0.1
    tv_max_iter: int = 100
    tophat_radius: int = 10
    blur_kw: int = 31
    blur_kh: int = 5
    column_valley_threshold: float = 0.1
    min_band_width: int = 31
    # dilation ellipse size, in estimated line heights
    ellipse_width_factor: float = 3.0
    ellipse_height_factor: float = 1.0
    extrapolation_margin: int | None = None  # None -> 2 * blur_kw
    min_blob_area_fraction: float = 0.1  # of the median blob area in a band
    area_threshold_factor: float = 1.2
    area_percentile: float = 0.95
    connectivity: int = 8

    def __post_init__(self):
        if self.tv_weight <= 0 or self.tophat_radius < 1:
            raise ValueError("tv_weight and tophat_radius must be positive")
        if not self.blur_kw > self.blur_kh >= 1:
            raise ValueError("need blur_kw > blur_kh >= 1")
        if not 0 < self.column_valley_threshold < 1:
            raise ValueError("column_valley_threshold must lie in (0, 1)")
        if self.area_threshold_factor < 1:
            raise ValueError("area_threshold_factor must be >= 1")
        if not 0 < self.area_percentile <= 1:
            raise ValueError("area_percentile must lie in (0, 1]")

    @property
    def margin(self) -> int:
        return 2 * self.blur_kw if self.extrapolation_margin is None else self.extrapolation_margin


def gpi_preprocess(img, cfg: GpiConfig | None = None) -> np.ndarray:
    """Contrast image with bright ink: top-hat of the inverted TV-denoised page."""
    cfg = cfg or GpiConfig()
    arr = np.asarray(img)
    gray = to_grayscale(arr) if arr.ndim == 3 else as_gray(arr)
    if gray.min() == gray.max():
        return np.zeros(gray.shape)
    smooth = tv_denoise(gray, cfg.tv_weight, cfg.tv_max_iter)
    return top_hat(255.0 - smooth, StructuringElement.circle(cfg.tophat_radius))


def detect_columns(blurred, cfg: GpiConfig | None = None) -> list[ColumnBand]:
    """Maximal runs of the column profile above ``valley * max(profile)``."""
    cfg = cfg or GpiConfig()
    profile = as_gray(blurred).sum(axis=0)
    peak = profile.max()
    if peak <= 0:
        return []
    above = profile > cfg.column_valley_threshold * peak
    bands = []
    x, w = 0, len(profile)
    while x < w:
        if above[x]:
            s = x
            while x < w and above[x]:
                x += 1
            if x - s >= cfg.min_band_width:
                bands.append(ColumnBand(s, x))
        else:
            x += 1
    return bands


def detect_blobs(blurred, bands: Sequence[ColumnBand], cfg: GpiConfig | None = None) -> list[tuple[Component, ColumnBand]]:
    """Otsu blobs of the blurred contrast image, thresholded per band."""
    cfg = cfg or GpiConfig()
    b = as_gray(blurred)
    out = []
    for band in bands:
        sub = b[:, band.x_start : band.x_end]
        levels = np.clip(np.rint(sub), 0, 255)
        if levels.min() == levels.max():
            continue
        mask = levels > otsu_threshold(levels)
        labels, n = label_components(mask, cfg.connectivity)
        comps = components_of(labels, n)
        if not comps:
            continue
        min_area = cfg.min_blob_area_fraction * float(np.median([c.area for c in comps]))
        for c in comps:
            if c.area >= min_area:
                shifted = c.coords + np.array([band.x_start, 0])
                out.append((Component(c.label, shifted), band))
    return out


def fit_blob_curves(blobs: Sequence[Component]) -> list[BlobCurve]:
    """Least-squares quadratic through the per-column vertical midpoints of each blob.

    Blobs covering fewer than three columns get a horizontal line through
    their centroid.
    """
    curves = []
    for blob in blobs:
        xs, ys = blob.coords[:, 0], blob.coords[:, 1]
        cols, inv = np.unique(xs, return_inverse=True)
        x_range = (int(cols[0]), int(cols[-1]))
        if len(cols) < 3:
            curves.append(BlobCurve((0.0, 0.0, float(ys.mean())), x_range, blob))
            continue
        mids = np.bincount(inv, weights=ys) / np.bincount(inv)
        # fit in centered coordinates for conditioning, then expand
        x0 = float(cols.mean())
        t = cols - x0
        A = np.stack([t * t, t, np.ones_like(t, dtype=np.float64)], axis=1)
        (p2, p1, p0), *_ = np.linalg.lstsq(A, mids, rcond=None)
        a = p2
        b = p1 - 2 * p2 * x0
        c = p2 * x0 * x0 - p1 * x0 + p0
        curves.append(BlobCurve((float(a), float(b), float(c)), x_range, blob))
    return curves


def rasterize_curve(curve: BlobCurve, band: ColumnBand, shape: tuple[int, int], margin: int) -> np.ndarray:
    h, w = shape
    x_lo = max(curve.x_range[0] - margin, band.x_start, 0)
    x_hi = min(curve.x_range[1] + margin, band.x_end - 1, w - 1)
    out = np.zeros(shape, dtype=bool)
    if x_lo > x_hi:
        return out
    xs = np.arange(x_lo, x_hi + 1)
    ys = np.floor(curve(xs) + 0.5).astype(np.int64)
    ok = (ys >= 0) & (ys < h)
    out[ys[ok], xs[ok]] = True
    # connect vertical jumps between neighbouring columns
    for i in range(1, len(xs)):
        if ok[i] and ok[i - 1] and abs(ys[i] - ys[i - 1]) > 1:
            lo, hi = sorted((ys[i - 1], ys[i]))
            out[lo : hi + 1, xs[i]] = True
    return out


def _band_for(curve: BlobCurve, bands: Sequence[ColumnBand]) -> ColumnBand | None:
    cx = (curve.x_range[0] + curve.x_range[1]) / 2.0
    for band in bands:
        if band.contains(cx):
            return band
    return None


def build_initial_mask(
    curves: Sequence[BlobCurve],
    bands: Sequence[ColumnBand],
    shape: tuple[int, int],
    ellipse: StructuringElement,
    margin: int,
) -> np.ndarray:
    """Union of the extrapolated curves, clipped to their bands, dilated by ``ellipse``."""
    out = np.zeros(shape, dtype=bool)
    for curve in curves:
        band = _band_for(curve, bands)
        if band is None:
            continue
        out |= rasterize_curve(curve, band, shape, margin)
    if not out.any():
        return out
    dil = dilate(out, ellipse)
    # dilation never leaks a line outside its own band
    inside = np.zeros(shape[1], dtype=bool)
    for band in bands:
        inside[band.x_start : band.x_end] = True
    return dil & inside[None, :]


def nearest_rank_percentile(values: Sequence[float], q: float) -> float:
    if not len(values):
        raise ValueError("percentile of an empty sequence")
    s = sorted(values)
    rank = max(1, math.ceil(q * len(s) - 1e-9))
    return float(s[rank - 1])


def compute_area_threshold(areas: Sequence[float], cfg: GpiConfig | None = None) -> float:
    """``factor x`` nearest-rank percentile of training component areas."""
    cfg = cfg or GpiConfig()
    if not len(areas):
        raise ValueError("area calibration needs at least one training component")
    return cfg.area_threshold_factor * nearest_rank_percentile(areas, cfg.area_percentile)


def gt_component_areas(gt, connectivity: int = 8) -> list[int]:
    """Areas of the connected pieces of every ground-truth line."""
    g = np.asarray(gt)
    areas = []
    for k in np.unique(g[g > 0]).tolist():
        labels, n = label_components(g == k, connectivity)
        if n:
            areas.extend(np.bincount(labels.ravel())[1:].tolist())
    return areas


def refine_components(initial, contrast, area_thresh: float, connectivity: int = 8) -> np.ndarray:
    """Assign Otsu components of ``contrast`` to their maximal-overlap region.

    ``initial`` is an instance map of line regions (a boolean mask is
    labeled by connected components first). Components with no overlap or
    with area above ``area_thresh`` are dropped; ties go to the lower label.
    """
    init = np.asarray(initial)
    if init.dtype == bool:
        init, _ = label_components(init, connectivity)
    c = as_gray(contrast)
    levels = np.clip(np.rint(c), 0, 255)
    out = np.zeros(c.shape, dtype=np.int64)
    if levels.min() == levels.max():
        return out
    comp_labels, n = label_components(levels > otsu_threshold(levels), connectivity)
    if n == 0:
        return out
    areas = np.bincount(comp_labels.ravel(), minlength=n + 1)
    both = (comp_labels > 0) & (init > 0)
    assign = np.zeros(n + 1, dtype=np.int64)
    if both.any():
        stride = int(init.max()) + 1
        codes, counts = np.unique(comp_labels[both] * stride + init[both], return_counts=True)
        comp, region = codes // stride, codes % stride
        # sort by component, then overlap descending, then region ascending
        order = np.lexsort((region, -counts, comp))
        comp, region = comp[order], region[order]
        first = np.ones(len(comp), dtype=bool)
        first[1:] = comp[1:] != comp[:-1]
        assign[comp[first]] = region[first]
    assign[areas > area_thresh] = 0
    assign[0] = 0
    return assign[comp_labels]


@dataclass
class GpiResult:
    labels: np.ndarray
    contrast: np.ndarray
    blurred: np.ndarray
    bands: list
    curves: list
    initial: np.ndarray


def estimate_line_height(blobs: Sequence[Component]) -> float:
    """Median mean-column-thickness of the detected blobs."""
    if not blobs:
        return 0.0
    th = [c.area / len(np.unique(c.coords[:, 0])) for c in blobs]
    return float(np.median(th))


def run_gpi(img, cfg: GpiConfig | None = None, area_thresh: float = math.inf, *, return_stages: bool = False):
    cfg = cfg or GpiConfig()
    contrast = gpi_preprocess(img, cfg)
    blurred = elongated_blur(contrast, cfg.blur_kw, cfg.blur_kh)
    bands = detect_columns(blurred, cfg)
    found = detect_blobs(blurred, bands, cfg)
    blobs = [c for c, _ in found]
    curves = fit_blob_curves(blobs)
    h = estimate_line_height(blobs)
    shape = contrast.shape
    if curves and h > 0:
        ew = max(3, int(round(cfg.ellipse_width_factor * h)) | 1)
        eh = max(1, int(round(cfg.ellipse_height_factor * h)) | 1)
        initial = build_initial_mask(curves, bands, shape, StructuringElement.ellipse(ew, eh), cfg.margin)
    else:
        initial = np.zeros(shape, dtype=bool)
    regions, _ = label_components(initial, cfg.connectivity)
    labels = normalize_labels(refine_components(regions, contrast, area_thresh, cfg.connectivity))
    if return_stages:
        return GpiResult(labels, contrast, blurred, bands, curves, initial)
    return labels
