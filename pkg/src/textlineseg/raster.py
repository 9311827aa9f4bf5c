"""Core raster conventions, connected components and morphology.

Rasters are plain numpy arrays indexed ``[y, x]``:

* gray images are ``float64`` arrays with intensities in [0, 255],
* binary masks are ``bool`` arrays, ``True`` = ink / foreground,
* instance maps are integer arrays, ``0`` = background, ``k >= 1`` = line ``k``.

Pixel coordinates exposed to callers (bounding boxes, pixel sets) are
``(x, y)`` pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy import ndimage as ndi

__all__ = [
    "Component",
    "StructuringElement",
    "as_gray",
    "as_mask",
    "as_instances",
    "connected_components",
    "label_components",
    "dilate",
    "erode",
    "close",
    "open_",
    "gray_erode",
    "gray_dilate",
    "top_hat",
    "to_grayscale",
    "normalize_labels",
]


def as_gray(img) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"expected a non-empty 2-D gray image, got shape {arr.shape}")
    return arr


def as_mask(mask) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D mask, got shape {arr.shape}")
    return arr.astype(bool, copy=False)


def as_instances(labels) -> np.ndarray:
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D instance map, got shape {arr.shape}")
    if arr.size and arr.min() < 0:
        raise ValueError("instance labels must be non-negative")
    return arr.astype(np.int64, copy=False)


@dataclass(frozen=True)
class Component:
    """One connected region of a mask or of a single instance label.

    ``coords`` holds one ``(x, y)`` row per pixel, in raster order.
    """

    label: int
    coords: np.ndarray = field(repr=False)

    @property
    def area(self) -> int:
        return int(self.coords.shape[0])

    @property
    def bbox(self) -> tuple[int, int, int, int]:
        xs, ys = self.coords[:, 0], self.coords[:, 1]
        return int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())

    @property
    def height(self) -> int:
        _, y0, _, y1 = self.bbox
        return y1 - y0 + 1

    @property
    def width(self) -> int:
        x0, _, x1, _ = self.bbox
        return x1 - x0 + 1

    @property
    def pixels(self) -> frozenset[tuple[int, int]]:
        return frozenset(map(tuple, self.coords.tolist()))

    @classmethod
    def from_pixels(cls, label: int, pixels: Iterable[tuple[int, int]]) -> "Component":
        pts = sorted(set(pixels), key=lambda p: (p[1], p[0]))
        if not pts:
            raise ValueError("a component needs at least one pixel")
        return cls(label, np.asarray(pts, dtype=np.int64).reshape(-1, 2))


@dataclass(frozen=True)
class StructuringElement:
    """Flat structuring element given as offsets ``(dx, dy)`` around the origin."""

    shape: str
    size: tuple[int, ...]
    offsets: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if (0, 0) not in self.offsets:
            raise ValueError("structuring element must contain the origin")

    @classmethod
    def rectangle(cls, w: int, h: int) -> "StructuringElement":
        if w < 1 or h < 1:
            raise ValueError("rectangle sides must be >= 1")
        # even sides extend one pixel further towards negative offsets
        xs = range(-(w // 2), w - w // 2)
        ys = range(-(h // 2), h - h // 2)
        return cls("rectangle", (w, h), tuple((dx, dy) for dy in ys for dx in xs))

    @classmethod
    def ellipse(cls, w: int, h: int) -> "StructuringElement":
        if w < 1 or h < 1:
            raise ValueError("ellipse axes must be >= 1")
        a, b = (w - 1) / 2.0, (h - 1) / 2.0
        offs = []
        for dy in range(-int(b), int(b) + 1):
            for dx in range(-int(a), int(a) + 1):
                u = (dx / a) ** 2 if a > 0 else (0.0 if dx == 0 else np.inf)
                v = (dy / b) ** 2 if b > 0 else (0.0 if dy == 0 else np.inf)
                if u + v <= 1.0 + 1e-12:
                    offs.append((dx, dy))
        return cls("ellipse", (w, h), tuple(offs))

    @classmethod
    def circle(cls, r: int) -> "StructuringElement":
        if r < 0:
            raise ValueError("radius must be >= 0")
        offs = [
            (dx, dy)
            for dy in range(-r, r + 1)
            for dx in range(-r, r + 1)
            if dx * dx + dy * dy <= r * r
        ]
        return cls("circle", (r,), tuple(offs))

    def reflected(self) -> "StructuringElement":
        return StructuringElement(
            self.shape, self.size, tuple((-dx, -dy) for dx, dy in self.offsets)
        )


def _structure(connectivity: int) -> np.ndarray:
    if connectivity == 4:
        return ndi.generate_binary_structure(2, 1)
    if connectivity == 8:
        return ndi.generate_binary_structure(2, 2)
    raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")


def label_components(mask, connectivity: int = 8) -> tuple[np.ndarray, int]:
    """Label ink components 1..K in first-encounter raster order."""
    m = as_mask(mask)
    labels, n = ndi.label(m, structure=_structure(connectivity))
    return labels.astype(np.int64, copy=False), int(n)


def connected_components(mask, connectivity: int = 8) -> list[Component]:
    labels, n = label_components(mask, connectivity)
    return components_of(labels, n)


def components_of(labels: np.ndarray, n: int | None = None) -> list[Component]:
    """Split a labeled raster into one :class:`Component` per label id."""
    if n is None:
        n = int(labels.max()) if labels.size else 0
    if n == 0:
        return []
    ys, xs = np.nonzero(labels)
    lab = labels[ys, xs]
    order = np.argsort(lab, kind="stable")
    lab, ys, xs = lab[order], ys[order], xs[order]
    bounds = np.searchsorted(lab, np.arange(1, n + 2))
    out = []
    for k in range(1, n + 1):
        s, e = bounds[k - 1], bounds[k]
        if s == e:
            continue
        out.append(Component(k, np.stack([xs[s:e], ys[s:e]], axis=1)))
    return out


def _shift_into(dst: np.ndarray, src: np.ndarray, dx: int, dy: int, op) -> None:
    """Apply ``dst[y+dy, x+dx] = op(dst[y+dy, x+dx], src[y, x])`` where in bounds."""
    h, w = src.shape
    if abs(dx) >= w or abs(dy) >= h:
        return
    sy = slice(max(0, -dy), h - max(0, dy))
    sx = slice(max(0, -dx), w - max(0, dx))
    ty = slice(max(0, dy), h - max(0, -dy))
    tx = slice(max(0, dx), w - max(0, -dx))
    op(dst[ty, tx], src[sy, sx], out=dst[ty, tx])


def dilate(mask, se: StructuringElement) -> np.ndarray:
    m = as_mask(mask)
    out = np.zeros_like(m)
    for dx, dy in se.offsets:
        _shift_into(out, m, dx, dy, np.logical_or)
    return out


def erode(mask, se: StructuringElement) -> np.ndarray:
    """Keep a pixel iff every offset of ``se`` lands on ink; outside counts as background."""
    m = as_mask(mask)
    out = np.ones_like(m)
    h, w = m.shape
    for dx, dy in se.offsets:
        # out[y, x] &= m[y+dy, x+dx], out-of-bounds -> False
        shifted = np.zeros_like(m)
        _shift_into(shifted, m, -dx, -dy, np.logical_or)
        out &= shifted
    return out


def close(mask, se: StructuringElement) -> np.ndarray:
    """Dilate then erode on a canvas padded by the se reach, so ink at the border survives."""
    m = as_mask(mask)
    r = max(max(abs(dx), abs(dy)) for dx, dy in se.offsets)
    if r == 0:
        return m.copy()
    padded = np.pad(m, r)
    return erode(dilate(padded, se), se)[r:-r, r:-r]


def open_(mask, se: StructuringElement) -> np.ndarray:
    return dilate(erode(mask, se), se)


def gray_erode(img, se: StructuringElement) -> np.ndarray:
    g = as_gray(img)
    out = np.full_like(g, np.inf)
    for dx, dy in se.offsets:
        # out[y, x] = min over offsets of g[y+dy, x+dx]; out-of-bounds -> +inf
        _shift_into(out, g, -dx, -dy, np.minimum)
    return out


def gray_dilate(img, se: StructuringElement) -> np.ndarray:
    g = as_gray(img)
    out = np.full_like(g, -np.inf)
    for dx, dy in se.offsets:
        _shift_into(out, g, dx, dy, np.maximum)
    return out


def top_hat(img, se: StructuringElement) -> np.ndarray:
    """White top-hat: image minus its grayscale opening, clamped at zero."""
    g = as_gray(img)
    opened = gray_dilate(gray_erode(g, se), se)
    return np.maximum(g - opened, 0.0)


def to_grayscale(rgb) -> np.ndarray:
    """ITU-R 601 luma, rounded half-up, computed in exact integer arithmetic."""
    arr = np.asarray(rgb)
    if arr.ndim == 2:
        return arr.astype(np.float64)
    if arr.ndim != 3 or arr.shape[2] < 3:
        raise ValueError(f"expected an RGB raster, got shape {arr.shape}")
    c = np.rint(arr[..., :3]).astype(np.int64)
    luma = (299 * c[..., 0] + 587 * c[..., 1] + 114 * c[..., 2] + 500) // 1000
    return luma.astype(np.float64)


def normalize_labels(labels) -> np.ndarray:
    """Compact labels to 1..K in order of first appearance in raster scan."""
    m = as_instances(labels)
    flat = m.ravel()
    ids, first = np.unique(flat, return_index=True)
    keep = ids != 0
    ids, first = ids[keep], first[keep]
    order = ids[np.argsort(first, kind="stable")]
    lut_keys = order
    new = np.arange(1, len(order) + 1, dtype=np.int64)
    out = np.zeros_like(flat)
    if len(order):
        sorter = np.argsort(lut_keys)
        pos = np.searchsorted(lut_keys, flat, sorter=sorter)
        pos = np.clip(pos, 0, len(order) - 1)
        hit = lut_keys[sorter][pos] == flat
        out[hit] = new[sorter][pos[hit]]
    return out.reshape(m.shape)
