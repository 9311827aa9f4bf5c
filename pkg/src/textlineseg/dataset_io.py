"""PNG codecs for pages and ground truth, dataset layout, report serialization.

Layout on disk::

    root/<manuscript>/<split>/img/<page>.png
    root/<manuscript>/<split>/gt/<page>.png

Instance masks are 8-bit RGB: black is background, each line has its own
color. Predictions written by the CLI use the same encoding under
``pred_root/<manuscript>/<split>/<page>.png``.
"""

from __future__ import annotations

import colorsys
import csv
import io
import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable

import numpy as np
from PIL import Image

from .metrics import METRIC_NAMES, Leaderboard, LeaderboardEntry, ManuscriptReport
from .raster import as_instances, to_grayscale

__all__ = [
    "DatasetError",
    "PagePair",
    "DatasetLayout",
    "palette",
    "encode_instance_png",
    "decode_instance_png",
    "decode_semantic_png",
    "encode_gray_png",
    "encode_rgb_png",
    "read_gray",
    "write_png",
    "scan_dataset",
    "report_rows",
    "write_report",
]

SPLITS = ("train", "validation", "test")
GOLDEN = 0.6180339887498949


class DatasetError(ValueError):
    """Malformed dataset tree or unreadable file."""


@lru_cache(maxsize=8)
def _palette_table(n: int) -> np.ndarray:
    """First ``n`` label colors: golden-ratio hue walk, full saturation.

    Once the hue walk starts repeating quantized colors, the value channel
    is stepped down until an unused, non-black color is found, which keeps
    the mapping injective.
    """
    table = np.zeros((n + 1, 3), dtype=np.uint8)
    used = {(0, 0, 0)}
    for k in range(1, n + 1):
        hue = (k * GOLDEN) % 1.0
        for step in range(256):
            v = 1.0 - step / 256.0
            rgb = tuple(int(round(c * 255)) for c in colorsys.hsv_to_rgb(hue, 1.0, v))
            if rgb not in used:
                break
        else:  # pragma: no cover - beyond 256 * 1530 labels
            raise ValueError("palette exhausted")
        used.add(rgb)
        table[k] = rgb
    return table


def palette(n: int) -> np.ndarray:
    """``(n + 1, 3)`` uint8 table; row 0 is black."""
    size = 256
    while size < n:
        size *= 2
    return _palette_table(size)[: n + 1]


def _png_bytes(img: Image.Image) -> bytes:
    buf = io.BytesIO()
    img.save(buf, format="PNG", optimize=False, compress_level=6)
    return buf.getvalue()


def encode_instance_png(labels) -> bytes:
    m = as_instances(labels)
    n = int(m.max()) if m.size else 0
    rgb = palette(n)[m]
    return _png_bytes(Image.fromarray(rgb, mode="RGB"))


def _open_png(data: bytes) -> Image.Image:
    if not data.startswith(b"\x89PNG\r\n\x1a\n"):
        raise DatasetError("not a PNG stream")
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except (OSError, SyntaxError) as exc:
        raise DatasetError(f"unreadable PNG: {exc}") from exc
    return img


def _packed_rgb(data: bytes) -> np.ndarray:
    arr = np.asarray(_open_png(data).convert("RGB"), dtype=np.int64)
    return (arr[..., 0] << 16) | (arr[..., 1] << 8) | arr[..., 2]


def decode_instance_png(data: bytes) -> np.ndarray:
    """Distinct non-black colors become labels 1..K in raster first-encounter order."""
    packed = _packed_rgb(data)
    flat = packed.ravel()
    colors, first, inverse = np.unique(flat, return_index=True, return_inverse=True)
    rank = np.zeros(len(colors), dtype=np.int64)
    fg = colors != 0
    order = np.argsort(first[fg], kind="stable")
    ranks_fg = np.empty(int(fg.sum()), dtype=np.int64)
    ranks_fg[order] = np.arange(1, len(order) + 1)
    rank[fg] = ranks_fg
    return rank[inverse].reshape(packed.shape)


def decode_semantic_png(data: bytes) -> np.ndarray:
    return _packed_rgb(data) != 0


def encode_gray_png(img) -> bytes:
    """Gray page saved as 8-bit RGB with equal channels."""
    g = np.clip(np.rint(np.asarray(img, dtype=np.float64)), 0, 255).astype(np.uint8)
    return _png_bytes(Image.fromarray(np.stack([g, g, g], axis=-1), mode="RGB"))


def encode_rgb_png(rgb) -> bytes:
    return _png_bytes(Image.fromarray(np.asarray(rgb, dtype=np.uint8), mode="RGB"))


def read_gray(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    arr = np.asarray(_open_png(data).convert("RGB"))
    return to_grayscale(arr)


def write_png(path: str | Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)


@dataclass(frozen=True)
class PagePair:
    manuscript: str
    split: str
    page: str
    image: Path
    gt: Path | None


@dataclass
class DatasetLayout:
    root: Path
    pages: list[PagePair] = field(default_factory=list)

    @property
    def manuscripts(self) -> list[str]:
        return sorted({p.manuscript for p in self.pages})

    def select(self, split: str | None = None, manuscript: str | None = None) -> list[PagePair]:
        return [
            p
            for p in self.pages
            if (split is None or p.split == split) and (manuscript is None or p.manuscript == manuscript)
        ]

    def counts(self) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {}
        for p in self.pages:
            out.setdefault(p.manuscript, {s: 0 for s in SPLITS})[p.split] += 1
        return out


def _png_size(path: Path) -> tuple[int, int]:
    try:
        with Image.open(path) as im:
            return im.size
    except OSError as exc:
        raise DatasetError(f"unreadable PNG {path}: {exc}") from exc


def scan_dataset(root: str | Path, check_sizes: bool = True) -> DatasetLayout:
    """Discover ``root/<manuscript>/<split>/{img,gt}/*.png``, validating pairs."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} does not exist")
    pages = []
    for ms_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for split in SPLITS:
            sdir = ms_dir / split
            if not sdir.is_dir():
                continue
            imgs = {p.stem: p for p in sorted((sdir / "img").glob("*.png"))}
            gts = {p.stem: p for p in sorted((sdir / "gt").glob("*.png"))}
            annotated = (sdir / "gt").is_dir()
            for stem in sorted(set(gts) - set(imgs)):
                raise DatasetError(f"ground truth without image: {gts[stem]}")
            for stem in sorted(imgs):
                gt = gts.get(stem)
                if annotated and gt is None:
                    raise DatasetError(f"missing ground truth for {imgs[stem]}")
                if gt is not None and check_sizes and _png_size(imgs[stem]) != _png_size(gt):
                    raise DatasetError(f"image and ground truth sizes differ for {imgs[stem]}")
                pages.append(PagePair(ms_dir.name, split, stem, imgs[stem], gt))
    return DatasetLayout(root, pages)


def _f6(x: float) -> float:
    return float(f"{x:.6f}")


CSV_COLUMNS = ("system", "manuscript", "page", *METRIC_NAMES)


def report_rows(board: Leaderboard | LeaderboardEntry | ManuscriptReport, system: str = "") -> list[dict]:
    """Flatten to CSV rows: one per page plus one ``average`` row per manuscript."""
    if isinstance(board, ManuscriptReport):
        entries = [LeaderboardEntry(system, [board])]
    elif isinstance(board, LeaderboardEntry):
        entries = [board]
    else:
        entries = board.ranking
    rows = []
    for e in entries:
        for ms in e.manuscripts:
            for p in ms.pages:
                rows.append({"system": e.system, "manuscript": ms.name, "page": p.page,
                             **{k: getattr(p, k) for k in METRIC_NAMES}})
            rows.append({"system": e.system, "manuscript": ms.name, "page": "average", **ms.averages})
    return rows


def _page_json(p) -> dict:
    return {
        "page": p.page,
        "missing": p.missing,
        **{k: _f6(getattr(p, k)) for k in METRIC_NAMES},
        "n_gt_lines": p.n_gt_lines,
        "n_pred_lines": p.n_pred_lines,
        "n_matches": p.n_matches,
        "match_pairs": [[int(i), int(j), _f6(s)] for i, j, s in p.match_pairs],
    }


def _entry_json(e: LeaderboardEntry, rank: int | None = None) -> dict:
    d = {"system": e.system}
    if rank is not None:
        d["rank"] = rank
    d["average_liu"] = _f6(e.score)
    d["manuscripts"] = [
        {"name": m.name, "averages": {k: _f6(v) for k, v in m.averages.items()},
         "pages": [_page_json(p) for p in m.pages]}
        for m in e.manuscripts
    ]
    return d


def write_report(board: Leaderboard | LeaderboardEntry | ManuscriptReport, fmt: str = "json") -> bytes:
    """Serialize a report; floats carry 6 decimals and field order is fixed."""
    if fmt == "json":
        if isinstance(board, Leaderboard):
            doc = {"ranking": [_entry_json(e, i + 1) for i, e in enumerate(board.ranking)]}
        elif isinstance(board, LeaderboardEntry):
            doc = _entry_json(board)
        else:
            doc = {"name": board.name, "averages": {k: _f6(v) for k, v in board.averages.items()},
                   "pages": [_page_json(p) for p in board.pages]}
        return (json.dumps(doc, indent=2) + "\n").encode()
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in report_rows(board):
            w.writerow([r["system"], r["manuscript"], r["page"], *(f"{r[k]:.6f}" for k in METRIC_NAMES)])
        return buf.getvalue().encode()
    raise ValueError(f"unknown report format {fmt!r}")


def ranking_table(board: Leaderboard) -> list[tuple[int, str, float, dict[str, dict[str, float]]]]:
    return [
        (i + 1, e.system, e.score, {m.name: m.averages for m in e.manuscripts})
        for i, e in enumerate(board.ranking)
    ]


def write_ranking_csv(board: Leaderboard) -> bytes:
    """Ranking table: rank, system, average Line IU, per-metric means."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("rank", "system", "average_liu", *(f"mean_{k}" for k in METRIC_NAMES)))
    for rank, system, score, per_ms in ranking_table(board):
        means = [sum(a[k] for a in per_ms.values()) / max(1, len(per_ms)) for k in METRIC_NAMES]
        w.writerow((rank, system, f"{score:.6f}", *(f"{v:.6f}" for v in means)))
    return buf.getvalue().encode()
