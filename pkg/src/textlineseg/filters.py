"""Binarization and smoothing filters used by the segmentation pipelines."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage as ndi
from scipy import signal

from .raster import as_gray

__all__ = [
    "AnisoGaussParams",
    "otsu_threshold",
    "otsu_binarize",
    "sauvola_binarize",
    "total_variation",
    "tv_denoise",
    "anisotropic_kernel",
    "anisotropic_gaussian",
    "gaussian_blur",
    "elongated_blur",
]


def _histogram(img: np.ndarray) -> np.ndarray:
    levels = np.clip(np.rint(img), 0, 255).astype(np.int64)
    return np.bincount(levels.ravel(), minlength=256)


def otsu_threshold(img) -> int:
    """Return the level ``t`` maximizing the between-class variance.

    Intensities are quantized to 256 integer bins; class 0 holds levels
    ``<= t``. The comparison is done in exact integer arithmetic so that
    ties resolve to the smallest ``t`` deterministically. A single-valued
    image returns that value.
    """
    g = as_gray(img)
    hist = _histogram(g).tolist()
    present = [v for v, c in enumerate(hist) if c]
    if len(present) == 1:
        return present[0]
    n = sum(hist)
    total = sum(v * c for v, c in enumerate(hist))
    best_t, best_num, best_den = present[0], -1, 1
    n0 = s0 = 0
    for t in range(255):
        n0 += hist[t]
        s0 += t * hist[t]
        n1 = n - n0
        if n0 == 0 or n1 == 0:
            continue
        # between-class variance ~ (n*s0 - n0*total)^2 / (n0*n1)
        num = (n * s0 - n0 * total) ** 2
        den = n0 * n1
        if num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return best_t


def otsu_binarize(img) -> np.ndarray:
    """Dark-ink mask: pixels ``<= t``. A constant image gives an empty mask."""
    g = as_gray(img)
    levels = np.clip(np.rint(g), 0, 255)
    if levels.min() == levels.max():
        return np.zeros(g.shape, dtype=bool)
    return levels <= otsu_threshold(g)


def _window_sums(g: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    r = window // 2
    p = np.pad(g, r, mode="edge")
    ii = np.zeros((p.shape[0] + 1, p.shape[1] + 1))
    ii2 = np.zeros_like(ii)
    ii[1:, 1:] = p.cumsum(0).cumsum(1)
    ii2[1:, 1:] = (p * p).cumsum(0).cumsum(1)
    h, w = g.shape

    def box(a):
        return (
            a[window : window + h, window : window + w]
            - a[0:h, window : window + w]
            - a[window : window + h, 0:w]
            + a[0:h, 0:w]
        )

    return box(ii), box(ii2)


def sauvola_binarize(img, window: int = 25, k: float = 0.2, R: float = 128.0) -> np.ndarray:
    """Sauvola local thresholding with replicate-padded square windows."""
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    if not 0 < k < 1:
        raise ValueError("k must lie in (0, 1)")
    g = as_gray(img)
    n = float(window * window)
    s, s2 = _window_sums(g, window)
    mean = s / n
    var = np.maximum(s2 / n - mean * mean, 0.0)
    thresh = mean * (1.0 + k * (np.sqrt(var) / R - 1.0))
    return g < thresh


def _grad(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:, :-1] = u[:, 1:] - u[:, :-1]
    gy[:-1, :] = u[1:, :] - u[:-1, :]
    return gx, gy


def _div(px: np.ndarray, py: np.ndarray) -> np.ndarray:
    d = np.zeros_like(px)
    d[:, 0] = px[:, 0]
    d[:, 1:-1] = px[:, 1:-1] - px[:, :-2]
    d[:, -1] = -px[:, -2] if px.shape[1] > 1 else 0.0
    d[0, :] += py[0, :]
    d[1:-1, :] += py[1:-1, :] - py[:-2, :]
    if py.shape[0] > 1:
        d[-1, :] += -py[-2, :]
    return d


def total_variation(img) -> float:
    """Isotropic discrete TV with forward differences (Neumann boundary)."""
    gx, gy = _grad(as_gray(img))
    return float(np.sqrt(gx * gx + gy * gy).sum())


def tv_denoise(img, weight: float = 0.1, max_iter: int = 200, tol: float = 1e-4) -> np.ndarray:
    """Chambolle's dual projection for ``min ||u - f||^2 + weight * TV(u)``.

    ``weight`` is expressed for unit-range intensities, so the same value
    behaves identically on any image scaled to [0, 255].
    """
    if weight <= 0:
        raise ValueError("weight must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    f = as_gray(img) / 255.0
    lam = weight / 2.0
    tau = 0.25
    px = np.zeros_like(f)
    py = np.zeros_like(f)
    u = f.copy()
    for _ in range(max_iter):
        gx, gy = _grad(_div(px, py) - f / lam)
        norm = np.sqrt(gx * gx + gy * gy)
        px = (px + tau * gx) / (1.0 + tau * norm)
        py = (py + tau * gy) / (1.0 + tau * norm)
        u_new = f - lam * _div(px, py)
        change = np.linalg.norm(u_new - u)
        scale = np.linalg.norm(u_new)
        u = u_new
        if change <= tol * max(scale, 1e-12):
            break
    return u * 255.0


@dataclass(frozen=True)
class AnisoGaussParams:
    sigma_u: float
    sigma_v: float
    phi: float = 0.0

    def __post_init__(self):
        if self.sigma_u <= 0 or self.sigma_v <= 0:
            raise ValueError("standard deviations must be positive")

    @property
    def eta(self) -> float:
        return self.sigma_u / self.sigma_v

    @classmethod
    def from_eta(cls, sigma_v: float, eta: float, phi: float = 0.0) -> "AnisoGaussParams":
        if eta < 1:
            raise ValueError("elongation factor must be >= 1")
        return cls(eta * sigma_v, sigma_v, phi)


def anisotropic_kernel(p: AnisoGaussParams) -> np.ndarray:
    """Normalized oriented Gaussian kernel indexed ``[dy, dx]`` around its center.

    ``u`` runs along the direction at angle ``phi`` from the x axis (y down),
    ``v`` is orthogonal to it. Support is the ellipse reaching 3 sigma along
    each principal axis.
    """
    c, s = math.cos(p.phi), math.sin(p.phi)
    rx = 3.0 * math.hypot(p.sigma_u * c, p.sigma_v * s)
    ry = 3.0 * math.hypot(p.sigma_u * s, p.sigma_v * c)
    hx, hy = int(math.ceil(rx)), int(math.ceil(ry))
    dy, dx = np.mgrid[-hy : hy + 1, -hx : hx + 1].astype(np.float64)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    q = (u / p.sigma_u) ** 2 + (v / p.sigma_v) ** 2
    k = np.where(q <= 9.0 + 1e-9, np.exp(-0.5 * q), 0.0)
    return k / k.sum()


def _correlate_replicate(g: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    hy, hx = kernel.shape[0] // 2, kernel.shape[1] // 2
    padded = np.pad(g, ((hy, hy), (hx, hx)), mode="edge")
    if kernel.size <= 121:
        return ndi.correlate(padded, kernel, mode="constant")[hy : hy + g.shape[0], hx : hx + g.shape[1]]
    # correlation = convolution with the flipped kernel
    return signal.fftconvolve(padded, kernel[::-1, ::-1], mode="valid")


def anisotropic_gaussian(img, p: AnisoGaussParams) -> np.ndarray:
    return _correlate_replicate(as_gray(img), anisotropic_kernel(p))


def gaussian_blur(img, sigma: float) -> np.ndarray:
    """Isotropic Gaussian with the same disc-shaped 3-sigma support."""
    return anisotropic_gaussian(img, AnisoGaussParams(sigma, sigma, 0.0))


def elongated_blur(img, kw: int, kh: int) -> np.ndarray:
    """Box mean over a ``kw x kh`` window, replicate border."""
    if not kw > kh >= 1:
        raise ValueError("need kw > kh >= 1")
    g = as_gray(img)
    return ndi.uniform_filter(g, size=(kh, kw), mode="nearest")
