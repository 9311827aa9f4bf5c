"""Two-stage line segmentation: line-location blobs, then marker watershed.

Stage one binarizes the page, dilates it horizontally, estimates the
character height and filters the ink density with an elongated Gaussian
whose thresholded response yields one blob per line. Blobs that merged
across a column gutter are cut by a separator mask built from vertical
white-run lengths. Stage two grows the blobs vertically into text regions
and floods them from the blob markers over the inverted filter response.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .filters import AnisoGaussParams, anisotropic_gaussian, otsu_binarize, otsu_threshold
from .raster import (
    StructuringElement,
    as_instances,
    as_mask,
    connected_components,
    dilate,
    label_components,
    normalize_labels,
)

__all__ = [
    "CharHeightError",
    "CharHeightStats",
    "TauchConfig",
    "estimate_char_height",
    "line_response",
    "detect_line_blobs",
    "vertical_distance_map",
    "separator_mask",
    "split_blobs",
    "extract_text_region",
    "watershed_segment",
    "run_tauch",
]


class CharHeightError(ValueError):
    """No component falls inside the plausible character height interval."""


@dataclass(frozen=True)
class CharHeightStats:
    mean_height: float
    min_plausible: float
    max_plausible: float
    sample_count: int


@dataclass(frozen=True)
class TauchConfig:
    eta: float = 3.0
    # horizontal dilation closing gaps between glyphs and words
    dilation_se: StructuringElement = field(default_factory=lambda: StructuringElement.rectangle(15, 1))
    # "otsu" or a fixed level in [0, 255] applied to the response scaled by 255
    blob_threshold: str | float = "otsu"
    sigma_v_factor: float = 0.35  # sigma_v = factor * mean char height
    # separator threshold, in multiples of the mean char height
    separator_factor: float = 3.0
    plausible_height_bounds: tuple[float, float] = (0.01, 0.2)
    vertical_dilation: float = 1.0  # text-region SE height, in char heights
    min_blob_area: float = 1.0  # blobs smaller than this many char_height^2 are dropped
    connectivity: int = 8

    def __post_init__(self):
        if self.eta < 1:
            raise ValueError("eta must be >= 1")
        lo, hi = self.plausible_height_bounds
        if not 0 < lo < hi:
            raise ValueError("plausible height bounds must satisfy 0 < lo < hi")
        if self.separator_factor <= 0 or self.vertical_dilation <= 0 or self.sigma_v_factor <= 0:
            raise ValueError("thresholds and factors must be positive")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")


def estimate_char_height(mask, bounds: tuple[float, float], connectivity: int = 8) -> CharHeightStats:
    """Mean bounding-box height of components whose height lies in ``bounds``."""
    lo, hi = bounds
    heights = [c.height for c in connected_components(mask, connectivity)]
    kept = [h for h in heights if lo <= h <= hi]
    if not kept:
        raise CharHeightError(f"no component height within [{lo}, {hi}]")
    return CharHeightStats(sum(kept) / len(kept), float(lo), float(hi), len(kept))


def _pixel_bounds(cfg: TauchConfig, height: int) -> tuple[float, float]:
    lo, hi = cfg.plausible_height_bounds
    return max(2.0, lo * height), hi * height


def line_response(ink_density, stats: CharHeightStats, cfg: TauchConfig) -> np.ndarray:
    sigma_v = cfg.sigma_v_factor * stats.mean_height
    return anisotropic_gaussian(ink_density, AnisoGaussParams.from_eta(sigma_v, cfg.eta, 0.0))


def _threshold_response(resp: np.ndarray, support: np.ndarray, cfg: TauchConfig) -> np.ndarray:
    """Blob mask from the response scaled to [0, 255].

    In Otsu mode the histogram only counts pixels of ``support`` (the
    dilated ink), so the blank page margin does not dominate the split.
    """
    scaled = np.clip(resp * 255.0, 0, 255)
    if cfg.blob_threshold == "otsu":
        levels = np.rint(scaled)
        sample = levels[support] if support.any() else levels.ravel()
        if sample.min() == sample.max():
            return np.zeros(resp.shape, dtype=bool)
        return levels > otsu_threshold(sample[None, :])
    return scaled > float(cfg.blob_threshold)


@dataclass
class _Stage1:
    ink: np.ndarray
    dilated: np.ndarray
    stats: CharHeightStats
    response: np.ndarray
    blobs: np.ndarray


def _stage1(img, cfg: TauchConfig) -> _Stage1:
    ink = otsu_binarize(img)
    dilated = dilate(ink, cfg.dilation_se)
    stats = estimate_char_height(ink, _pixel_bounds(cfg, ink.shape[0]), cfg.connectivity)
    resp = line_response(dilated.astype(np.float64), stats, cfg)
    return _Stage1(ink, dilated, stats, resp, _threshold_response(resp, dilated, cfg))


def detect_line_blobs(img, cfg: TauchConfig | None = None) -> np.ndarray:
    """One blob per detected text line (before separator cutting).

    Raises :class:`CharHeightError` when the page has no plausible glyphs.
    A blank page yields an empty mask.
    """
    cfg = cfg or TauchConfig()
    ink = otsu_binarize(img)
    if not ink.any():
        return ink
    return _stage1(img, cfg).blobs


def vertical_distance_map(mask) -> np.ndarray:
    """Sum of distances from each white pixel to the nearest ink above and below.

    A missing ink pixel on either side is replaced by the virtual row just
    outside the image (row -1 above, row H below). Ink pixels score 0.
    """
    m = as_mask(mask)
    h, w = m.shape
    rows = np.arange(h)[:, None]
    # index of the last ink row at or above each pixel, -1 if none
    above = np.where(m, rows, -1)
    above = np.maximum.accumulate(above, axis=0)
    below = np.where(m, rows, h)
    below = np.minimum.accumulate(below[::-1], axis=0)[::-1]
    d = (rows - above) + (below - rows)
    return np.where(m, 0, d).astype(np.int64)


def separator_mask(dmap, threshold: float) -> np.ndarray:
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    return np.asarray(dmap) >= threshold


def split_blobs(blobs, separator) -> np.ndarray:
    b, s = as_mask(blobs), as_mask(separator)
    if b.shape != s.shape:
        raise ValueError("blob and separator masks differ in size")
    return b & ~s


def _vertical_se(stats: CharHeightStats, factor: float) -> StructuringElement:
    n = max(1, int(round(factor * stats.mean_height)))
    return StructuringElement.rectangle(1, n | 1)


def extract_text_region(blobs, stats: CharHeightStats, ink, factor: float = 1.0) -> np.ndarray:
    """Vertically dilated blobs restricted to ink."""
    b, k = as_mask(blobs), as_mask(ink)
    if b.shape != k.shape:
        raise ValueError("blob and ink masks differ in size")
    return dilate(b, _vertical_se(stats, factor)) & k


_NEIGHBOURS = {
    4: ((0, -1), (-1, 0), (1, 0), (0, 1)),
    8: ((-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)),
}


def watershed_segment(markers, region, relief, connectivity: int = 8) -> np.ndarray:
    """Marker-driven priority flood restricted to ``region``.

    Marker pixels keep their labels; other region pixels are claimed by
    the neighbour that reaches them first, processing pixels in order of
    (relief, insertion sequence). Region pixels unreachable from any
    marker stay 0, as does everything outside the region.
    """
    mk = as_instances(markers)
    reg = as_mask(region)
    rel = np.asarray(relief, dtype=np.float64)
    if not (mk.shape == reg.shape == rel.shape):
        raise ValueError("markers, region and relief must share one shape")
    if np.any((mk > 0) & ~reg):
        raise ValueError("marker pixels must lie inside the region")
    h, w = reg.shape
    W = w + 2
    # one-pixel frame of non-region pixels removes bounds checks
    inside = np.zeros((h + 2, W), dtype=bool)
    inside[1:-1, 1:-1] = reg
    lab = np.zeros((h + 2, W), dtype=np.int64)
    lab[1:-1, 1:-1] = mk
    pr = np.zeros((h + 2, W))
    pr[1:-1, 1:-1] = rel
    inside_f = inside.ravel().tolist()
    lab_f = lab.ravel().tolist()
    pr_f = pr.ravel().tolist()
    offs = [dy * W + dx for dx, dy in _NEIGHBOURS[connectivity]]

    heap = []
    seq = 0
    for idx in np.flatnonzero(lab.ravel() > 0).tolist():
        heap.append((pr_f[idx], seq, idx))
        seq += 1
    heapq.heapify(heap)
    pop, push = heapq.heappop, heapq.heappush
    while heap:
        _, _, idx = pop(heap)
        lbl = lab_f[idx]
        for o in offs:
            n = idx + o
            if inside_f[n] and not lab_f[n]:
                lab_f[n] = lbl
                push(heap, (pr_f[n], seq, n))
                seq += 1
    out = np.asarray(lab_f, dtype=np.int64).reshape(h + 2, W)[1:-1, 1:-1]
    return out


@dataclass
class TauchResult:
    labels: np.ndarray
    stage1: _Stage1 | None = None
    separator: np.ndarray | None = None
    split: np.ndarray | None = None
    region: np.ndarray | None = None


def run_tauch(img, cfg: TauchConfig | None = None, *, return_stages: bool = False):
    """Full TAU-CH chain; a page without plausible glyphs yields no lines."""
    cfg = cfg or TauchConfig()
    img = np.asarray(img, dtype=np.float64)
    empty = np.zeros(img.shape, dtype=np.int64)
    ink = otsu_binarize(img)
    if not ink.any():
        return TauchResult(empty) if return_stages else empty
    try:
        s1 = _stage1(img, cfg)
    except CharHeightError:
        return TauchResult(empty) if return_stages else empty
    h = s1.stats.mean_height
    sep = separator_mask(vertical_distance_map(s1.dilated), cfg.separator_factor * h)
    split = split_blobs(s1.blobs, sep)
    region = extract_text_region(split, s1.stats, s1.ink, cfg.vertical_dilation)

    blob_labels, n = label_components(split, cfg.connectivity)
    if n:
        areas = np.bincount(blob_labels.ravel(), minlength=n + 1)
        small = areas < cfg.min_blob_area * h * h
        small[0] = False
        blob_labels[small[blob_labels]] = 0
    markers = np.where(region, blob_labels, 0)
    labels = watershed_segment(markers, region, -s1.response, cfg.connectivity)
    labels = normalize_labels(labels)
    if return_stages:
        return TauchResult(labels, s1, sep, split, region)
    return labels
