"""Contour-based disconnection of merged lines and small-component cleanup.

The chain: trace the outer contour of every component, find contour point
pairs that are close in the plane but far apart along the contour (a thin
neck joining two lines), paint background strokes across those pairs, then
drop tiny leftovers and relabel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from skimage.draw import line as draw_line

from .raster import as_mask, components_of, label_components

__all__ = [
    "Contour",
    "DisconnectionPair",
    "trace_contours",
    "find_disconnection_pairs",
    "cut_at_pairs",
    "cleanup_and_relabel",
    "srcb_postprocess",
    "close_instances",
]


@dataclass(frozen=True)
class Contour:
    points: tuple[tuple[int, int], ...]  # (x, y), closed, counterclockwise on screen
    component: int

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class DisconnectionPair:
    p: tuple[int, int]
    q: tuple[int, int]
    euclidean_dist: float
    contour_gap: int


# clockwise in (x, y) with y pointing down: E, SE, S, SW, W, NW, N, NE
_DIRS = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))


def _trace(mask: np.ndarray, start: tuple[int, int]) -> list[tuple[int, int]]:
    """Moore-neighbour border following, counterclockwise as displayed."""
    h, w = mask.shape

    def ink(x, y):
        return 0 <= x < w and 0 <= y < h and mask[y, x]

    # start is topmost-leftmost, so the west neighbour is background;
    # scanning counterclockwise from there walks down the left flank first
    pts = [start]
    cur, back = start, 4
    first_move = None
    while True:
        found = None
        for k in range(8):
            d = (back - k) % 8  # counterclockwise sweep
            nx, ny = cur[0] + _DIRS[d][0], cur[1] + _DIRS[d][1]
            if ink(nx, ny):
                found = (d, (nx, ny))
                break
        if found is None:
            return pts  # isolated pixel
        d, nxt = found
        if first_move is None:
            first_move = (cur, nxt)
        elif (cur, nxt) == first_move:
            pts.pop()  # closing step re-entered the start
            return pts
        pts.append(nxt)
        # restart the sweep at the last background pixel seen, relative to nxt
        back = (d + 2) % 8 if d % 2 == 0 else (d + 3) % 8
        cur = nxt


def trace_contours(m, connectivity: int = 8) -> list[Contour]:
    """One outer contour per component; instance maps are traced per label."""
    arr = np.asarray(m)
    out = []
    if arr.dtype == bool:
        layers = [(0, arr)]
    else:
        layers = [(int(k), arr == k) for k in np.unique(arr[arr > 0]).tolist()]
    for _, layer in layers:
        labels, n = label_components(layer, connectivity)
        for comp in components_of(labels, n):
            order = np.lexsort((comp.coords[:, 0], comp.coords[:, 1]))
            x, y = comp.coords[order[0]].tolist()
            own = labels == comp.label
            out.append(Contour(tuple(_trace(own, (x, y))), int(len(out) + 1)))
    return out


def find_disconnection_pairs(c: Contour, d_max: float, g_min: int) -> list[DisconnectionPair]:
    """Point pairs within ``d_max`` in the plane and ``>= g_min`` steps apart on the contour.

    Candidates are taken in order of increasing distance; a candidate is
    suppressed when either end lies within ``d_max`` contour steps of an
    end of an already accepted pair.
    """
    if d_max <= 0 or g_min <= 0:
        raise ValueError("d_max and g_min must be positive")
    n = len(c.points)
    if n < 2 or g_min > n // 2:
        return []
    pts = np.asarray(c.points, dtype=np.float64)
    cands = []
    for i, j in sorted(cKDTree(pts).query_pairs(d_max + 1e-9)):
        gap = min(j - i, n - (j - i))
        if gap >= g_min:
            dist = float(np.hypot(*(pts[i] - pts[j])))
            cands.append((dist, i, j, gap))
    cands.sort()

    def circ(a, b):
        d = abs(a - b)
        return min(d, n - d)

    kept: list[int] = []
    out = []
    for dist, i, j, gap in cands:
        if any(circ(e, k) <= d_max for e in (i, j) for k in kept):
            continue
        kept.extend((i, j))
        out.append(DisconnectionPair(c.points[i], c.points[j], dist, gap))
    return out


def cut_at_pairs(m, pairs, stroke: int = 2) -> np.ndarray:
    """Paint background segments of width ``stroke`` between each pair."""
    out = as_mask(m).copy()
    h, w = out.shape
    lo = -(stroke // 2)
    span = range(lo, lo + stroke)
    for pair in pairs:
        (px, py), (qx, qy) = pair.p, pair.q
        rr, cc = draw_line(py, px, qy, qx)
        for dy in span:
            for dx in span:
                y, x = rr + dy, cc + dx
                ok = (y >= 0) & (y < h) & (x >= 0) & (x < w)
                out[y[ok], x[ok]] = False
    return out


def cleanup_and_relabel(m, min_area: float, connectivity: int = 8) -> np.ndarray:
    if min_area < 0:
        raise ValueError("min_area must be >= 0")
    labels, n = label_components(m, connectivity)
    if n == 0:
        return labels
    areas = np.bincount(labels.ravel(), minlength=n + 1)
    keep = areas >= min_area
    keep[0] = False
    lut = np.zeros(n + 1, dtype=np.int64)
    lut[keep] = np.arange(1, int(keep.sum()) + 1)
    return lut[labels]


def srcb_postprocess(
    m,
    d_max: float | None = None,
    g_min: int | None = None,
    stroke: int = 2,
    min_area: float | None = None,
    char_height: float | None = None,
    connectivity: int = 8,
) -> np.ndarray:
    """Run contour tracing, pair detection, cutting and cleanup on a mask.

    Defaults: ``d_max = char_height / 2`` (the char height falls back to the
    median component height), ``g_min = 4 * d_max`` and ``min_area`` = 5 %
    of the median component area.
    """
    mask = as_mask(m) if np.asarray(m).dtype == bool else np.asarray(m) > 0
    labels, n = label_components(mask, connectivity)
    if n == 0:
        return labels
    comps = components_of(labels, n)
    if char_height is None:
        char_height = float(np.median([c.height for c in comps]))
    if d_max is None:
        d_max = max(1.0, char_height / 2.0)
    if g_min is None:
        g_min = max(1, int(round(4 * d_max)))
    pairs = []
    for contour in trace_contours(mask, connectivity):
        pairs.extend(find_disconnection_pairs(contour, d_max, g_min))
    cut = cut_at_pairs(mask, pairs, stroke)
    if min_area is None:
        cut_labels, k = label_components(cut, connectivity)
        areas = np.bincount(cut_labels.ravel())[1:] if k else np.array([0])
        min_area = 0.05 * float(np.median(areas))
    return cleanup_and_relabel(cut, min_area, connectivity)


def close_instances(labels, size: int = 7) -> np.ndarray:
    """Per-line morphological closing; closed pixels never overwrite other lines."""
    from .raster import StructuringElement, close

    lab = np.asarray(labels)
    out = lab.copy()
    se = StructuringElement.rectangle(size, size)
    for k in np.unique(lab[lab > 0]).tolist():
        grown = close(lab == k, se)
        out[grown & (out == 0)] = k
    return out
