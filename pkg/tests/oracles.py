"""Slow, obviously-correct reference implementations used as test oracles.

Nothing here imports from textlineseg, so agreement is meaningful.
"""

from __future__ import annotations

from collections import deque
from itertools import product

import numpy as np


def label_sets(m) -> dict[int, set]:
    """label -> set of (x, y)."""
    out: dict[int, set] = {}
    h, w = m.shape
    for y in range(h):
        for x in range(w):
            v = int(m[y, x])
            if v:
                out.setdefault(v, set()).add((x, y))
    return out


def brute_page_metrics(pred, gt, t=0.75):
    """(piu, liu, dr, ra, fm) by direct set counting and exhaustive pair enumeration."""
    P, G = label_sets(pred), label_sets(gt)
    pink = set().union(*P.values()) if P else set()
    gink = set().union(*G.values()) if G else set()
    tp, fp, fn = len(pink & gink), len(pink - gink), len(gink - pink)
    piu = 1.0 if tp + fp + fn == 0 else tp / (tp + fp + fn)

    def greedy(pairs):
        used_p, used_g, n = set(), set(), 0
        for s, i, j in sorted(pairs, key=lambda c: (-c[0], c[1], c[2])):
            if i not in used_p and j not in used_g:
                used_p.add(i)
                used_g.add(j)
                n += 1
        return n

    liu_pairs, ms_pairs = [], []
    for i, j in product(sorted(P), sorted(G)):
        inter = len(P[i] & G[j])
        if not inter:
            continue
        union = len(P[i] | G[j])
        if inter / len(P[i]) >= t and inter / len(G[j]) >= t:
            liu_pairs.append((inter / union, i, j))
        if inter / union >= t:
            ms_pairs.append((inter / union, i, j))
    k = greedy(liu_pairs)
    n1, n2 = len(G), len(P)
    den = k + (n2 - k) + (n1 - k)
    liu = 1.0 if den == 0 else k / den
    m = greedy(ms_pairs)
    if n1 == 0:
        dr = 1.0 if m == 0 and n2 == 0 else 0.0
    else:
        dr = m / n1
    if n2 == 0:
        ra = 1.0 if m == 0 and n1 == 0 else 0.0
    else:
        ra = m / n2
    fm = 0.0 if dr + ra == 0 else 2 * dr * ra / (dr + ra)
    return piu, liu, dr, ra, fm


def otsu_exhaustive(img) -> int:
    """Smallest t in 0..255 maximizing between-class variance, in exact rationals."""
    from fractions import Fraction

    levels = np.clip(np.rint(np.asarray(img, dtype=float)), 0, 255).astype(int).ravel()
    if levels.min() == levels.max():
        return int(levels[0])
    n = len(levels)
    best, best_t = Fraction(-1), 0
    for t in range(256):
        lo = levels[levels <= t]
        hi = levels[levels > t]
        if len(lo) == 0 or len(hi) == 0:
            continue
        w0, w1 = Fraction(len(lo), n), Fraction(len(hi), n)
        m0, m1 = Fraction(int(lo.sum()), len(lo)), Fraction(int(hi.sum()), len(hi))
        var = w0 * w1 * (m0 - m1) ** 2
        if var > best:
            best, best_t = var, t
    return best_t


def naive_correlate_replicate(img, kernel):
    """out[y, x] = sum_k kernel[k] * img[clamp(y + dy), clamp(x + dx)], k centred."""
    img = np.asarray(img, dtype=float)
    h, w = img.shape
    kh, kw = kernel.shape
    cy, cx = kh // 2, kw // 2
    out = np.zeros_like(img)
    for y in range(h):
        for x in range(w):
            s = 0.0
            for j in range(kh):
                for i in range(kw):
                    yy = min(max(y + j - cy, 0), h - 1)
                    xx = min(max(x + i - cx, 0), w - 1)
                    s += kernel[j, i] * img[yy, xx]
            out[y, x] = s
    return out


def isotropic_disc_kernel(s):
    """Normalized isotropic Gaussian truncated to the disc of radius 3 s."""
    import math

    r = int(math.ceil(3 * s))
    dy, dx = np.mgrid[-r : r + 1, -r : r + 1].astype(float)
    q = (dx * dx + dy * dy) / (s * s)
    k = np.where(q <= 9 + 1e-9, np.exp(-q / 2), 0.0)
    return k / k.sum()


def bfs_watershed(markers, region, connectivity=8):
    """Multi-source FIFO flood from markers (raster order) inside region."""
    h, w = region.shape
    if connectivity == 4:
        nb = [(0, -1), (-1, 0), (1, 0), (0, 1)]
    else:
        nb = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]
    lab = np.where(region, markers, 0).astype(int)
    q = deque((y, x) for y in range(h) for x in range(w) if lab[y, x])
    while q:
        y, x = q.popleft()
        for dx, dy in nb:
            yy, xx = y + dy, x + dx
            if 0 <= yy < h and 0 <= xx < w and region[yy, xx] and not lab[yy, xx]:
                lab[yy, xx] = lab[y, x]
                q.append((yy, xx))
    return lab


def geodesic_distances(markers, region, label, connectivity=8):
    h, w = region.shape
    nb = [(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1) if (dx or dy) and (connectivity == 8 or dx * dy == 0)]
    d = np.full((h, w), np.inf)
    q = deque()
    for y in range(h):
        for x in range(w):
            if markers[y, x] == label:
                d[y, x] = 0
                q.append((y, x))
    while q:
        y, x = q.popleft()
        for dx, dy in nb:
            yy, xx = y + dy, x + dx
            if 0 <= yy < h and 0 <= xx < w and region[yy, xx] and d[yy, xx] == np.inf:
                d[yy, xx] = d[y, x] + 1
                q.append((yy, xx))
    return d


def outer_boundary(mask) -> set:
    """Ink pixels with a background or out-of-bounds 4-neighbour."""
    h, w = mask.shape
    out = set()
    for y in range(h):
        for x in range(w):
            if not mask[y, x]:
                continue
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                xx, yy = x + dx, y + dy
                if not (0 <= xx < w and 0 <= yy < h) or not mask[yy, xx]:
                    out.add((x, y))
                    break
    return out


def normal_equations_quadratic(xs, ys):
    """Least-squares (a, b, c) for y = a x^2 + b x + c, solving the normal
    equations exactly in rational arithmetic (ys are taken as exact decimals)."""
    from fractions import Fraction

    X = [Fraction(int(x)) for x in xs]
    Y = [Fraction(float(y)) for y in ys]
    S = [sum(x**k for x in X) for k in range(5)]
    T = [sum(y * x**k for x, y in zip(X, Y)) for k in range(3)]
    A = [[S[4], S[3], S[2], T[2]], [S[3], S[2], S[1], T[1]], [S[2], S[1], S[0], T[0]]]
    for i in range(3):
        p = next(r for r in range(i, 3) if A[r][i] != 0)
        A[i], A[p] = A[p], A[i]
        for r in range(3):
            if r != i:
                f = A[r][i] / A[i][i]
                A[r] = [a - f * b for a, b in zip(A[r], A[i])]
    return tuple(float(A[i][3] / A[i][i]) for i in range(3))


def random_instance_map(rng, h, w, k):
    """Random blocky instance map with up to k labels."""
    m = np.zeros((h, w), dtype=np.int64)
    for lab in range(1, k + 1):
        x0, y0 = rng.integers(0, w), rng.integers(0, h)
        x1, y1 = rng.integers(x0, w + 1), rng.integers(y0, h + 1)
        m[y0 : y1 + 1, x0 : x1 + 1] = lab
    noise = rng.random((h, w)) < 0.05
    m[noise] = rng.integers(0, k + 1, size=int(noise.sum()))
    return m
