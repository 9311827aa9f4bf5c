"""Text-line evaluation: Pixel IU, Line IU, MatchScore based DR / RA / FM.

Thresholds are inclusive: a pair scoring exactly 0.75 counts as a match,
both for MatchScore and for the Line IU precision/recall test.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .raster import Component, as_instances, as_mask

__all__ = [
    "MATCH_THRESHOLD",
    "PageMetrics",
    "ManuscriptReport",
    "LeaderboardEntry",
    "Leaderboard",
    "pixel_iu",
    "match_score",
    "overlap_table",
    "one_to_one_matches",
    "line_iu",
    "dr_ra_fm",
    "evaluate_page",
    "aggregate",
    "build_leaderboard",
]

MATCH_THRESHOLD = 0.75


def _check_shapes(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def pixel_iu(pred, gt) -> float:
    p, g = as_mask(pred), as_mask(gt)
    _check_shapes(p, g)
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    den = tp + fp + fn
    return 1.0 if den == 0 else tp / den


def match_score(r: Component, g: Component) -> float:
    rp, gp = r.pixels, g.pixels
    union = len(rp | gp)
    return len(rp & gp) / union if union else 0.0


@dataclass(frozen=True)
class OverlapTable:
    """Sparse pred x gt intersection counts plus per-line areas."""

    pred_ids: np.ndarray
    gt_ids: np.ndarray
    pred_area: dict
    gt_area: dict
    pairs: list  # (pred id, gt id, intersection)


def overlap_table(pred, gt) -> OverlapTable:
    p, g = as_instances(pred), as_instances(gt)
    _check_shapes(p, g)
    pf, gf = p.ravel(), g.ravel()
    pids, pcounts = np.unique(pf[pf > 0], return_counts=True)
    gids, gcounts = np.unique(gf[gf > 0], return_counts=True)
    both = (pf > 0) & (gf > 0)
    pairs = []
    if both.any():
        stride = int(gf.max()) + 1
        codes = pf[both] * stride + gf[both]
        codes, inter = np.unique(codes, return_counts=True)
        pairs = [
            (int(c // stride), int(c % stride), int(n)) for c, n in zip(codes.tolist(), inter.tolist())
        ]
    return OverlapTable(
        pids,
        gids,
        dict(zip(pids.tolist(), pcounts.tolist())),
        dict(zip(gids.tolist(), gcounts.tolist())),
        pairs,
    )


def _greedy_one_to_one(cands: list[tuple[float, int, int]]) -> list[tuple[int, int, float]]:
    used_p, used_g, out = set(), set(), []
    for score, i, j in sorted(cands, key=lambda c: (-c[0], c[1], c[2])):
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        out.append((i, j, score))
    return out


def one_to_one_matches(pred, gt, threshold: float = MATCH_THRESHOLD, table: OverlapTable | None = None):
    """Pairs ``(pred label, gt label, MatchScore)`` with score >= threshold.

    Pairs are taken greedily by descending score so that every line is used
    at most once.
    """
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    t = table or overlap_table(pred, gt)
    cands = []
    for i, j, inter in t.pairs:
        score = inter / (t.pred_area[i] + t.gt_area[j] - inter)
        if score >= threshold:
            cands.append((score, i, j))
    return _greedy_one_to_one(cands)


def _liu_matches(t: OverlapTable, threshold: float) -> list[tuple[int, int, float]]:
    cands = []
    for i, j, inter in t.pairs:
        precision = inter / t.pred_area[i]
        recall = inter / t.gt_area[j]
        if precision >= threshold and recall >= threshold:
            cands.append((inter / (t.pred_area[i] + t.gt_area[j] - inter), i, j))
    return _greedy_one_to_one(cands)


def line_iu(pred, gt, threshold: float = MATCH_THRESHOLD) -> float:
    t = overlap_table(pred, gt)
    tp = len(_liu_matches(t, threshold))
    fp = len(t.pred_ids) - tp
    fn = len(t.gt_ids) - tp
    den = tp + fp + fn
    return 1.0 if den == 0 else tp / den


def _rate(m: int, n: int, other: int) -> float:
    if n == 0:
        return 1.0 if m == 0 and other == 0 else 0.0
    return m / n


def dr_ra_fm(m: int, n1: int, n2: int) -> tuple[float, float, float]:
    """Detection rate, recognition accuracy and their harmonic mean."""
    if m < 0 or n1 < 0 or n2 < 0:
        raise ValueError("counts must be non-negative")
    if m > n1 or m > n2:
        raise ValueError(f"M={m} exceeds N1={n1} or N2={n2}")
    dr = _rate(m, n1, n2)
    ra = _rate(m, n2, n1)
    if n1 and n2:
        # 2*dr*ra/(dr+ra) simplified; one rounding instead of several
        fm = 2 * m / (n1 + n2)
    else:
        fm = 0.0 if dr + ra == 0 else 2 * dr * ra / (dr + ra)
    return dr, ra, fm


@dataclass
class PageMetrics:
    piu: float
    liu: float
    dr: float
    ra: float
    fm: float
    n_gt_lines: int
    n_pred_lines: int
    n_matches: int
    match_pairs: list = field(default_factory=list)
    page: str = ""
    missing: bool = False

    def values(self) -> tuple[float, float, float, float, float]:
        return self.piu, self.liu, self.dr, self.ra, self.fm


def evaluate_page(pred, gt, threshold: float = MATCH_THRESHOLD, page: str = "") -> PageMetrics:
    p, g = as_instances(pred), as_instances(gt)
    _check_shapes(p, g)
    t = overlap_table(p, g)
    piu = pixel_iu(p > 0, g > 0)
    tp = len(_liu_matches(t, threshold))
    n2, n1 = len(t.pred_ids), len(t.gt_ids)
    den = n1 + n2 - tp
    liu = 1.0 if den == 0 else tp / den
    matches = one_to_one_matches(p, g, threshold, table=t)
    dr, ra, fm = dr_ra_fm(len(matches), n1, n2)
    return PageMetrics(piu, liu, dr, ra, fm, n1, n2, len(matches), matches, page)


METRIC_NAMES = ("piu", "liu", "dr", "ra", "fm")


@dataclass
class ManuscriptReport:
    name: str
    pages: list[PageMetrics]

    def __post_init__(self):
        if not self.pages:
            raise ValueError(f"manuscript {self.name!r} has no pages")

    @property
    def averages(self) -> dict[str, float]:
        n = len(self.pages)
        return {k: sum(getattr(p, k) for p in self.pages) / n for k in METRIC_NAMES}


@dataclass
class LeaderboardEntry:
    system: str
    manuscripts: list[ManuscriptReport]

    @property
    def score(self) -> float:
        """Mean over manuscripts of the per-manuscript average Line IU."""
        if not self.manuscripts:
            return 0.0
        return sum(m.averages["liu"] for m in self.manuscripts) / len(self.manuscripts)


@dataclass
class Leaderboard:
    entries: list[LeaderboardEntry] = field(default_factory=list)

    @property
    def ranking(self) -> list[LeaderboardEntry]:
        return sorted(self.entries, key=lambda e: (-e.score, e.system))


def aggregate(system: str, pages_by_manuscript: Mapping[str, Sequence[PageMetrics]]) -> LeaderboardEntry:
    """Per-manuscript averages, manuscripts reduced in name order."""
    reports = [ManuscriptReport(name, list(pages_by_manuscript[name])) for name in sorted(pages_by_manuscript)]
    return LeaderboardEntry(system, reports)


def build_leaderboard(entries: Sequence[LeaderboardEntry]) -> Leaderboard:
    return Leaderboard(list(entries))
