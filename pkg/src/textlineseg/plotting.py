"""Report figures and prediction overlays."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import METRIC_NAMES, Leaderboard, LeaderboardEntry  # noqa: E402

LABELS = {"piu": "Pixel IU", "liu": "Line IU", "dr": "DR", "ra": "RA", "fm": "FM"}


def _save(fig, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    # no software/date metadata: figures must be byte-stable across runs
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


def plot_manuscript_metrics(entry: LeaderboardEntry, path: str | Path) -> None:
    """Grouped bars of the five averaged metrics, one group per manuscript."""
    ms = entry.manuscripts
    fig, ax = plt.subplots(figsize=(max(5, 2.2 * len(ms) + 2), 3.6))
    width = 0.8 / len(METRIC_NAMES)
    x = np.arange(len(ms))
    for i, k in enumerate(METRIC_NAMES):
        vals = [m.averages[k] for m in ms]
        ax.bar(x + (i - 2) * width, vals, width, label=LABELS[k])
    ax.set_xticks(x)
    ax.set_xticklabels([m.name for m in ms], fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.set_title(f"{entry.system}: average Line IU {entry.score:.3f}")
    ax.legend(ncol=5, fontsize=7, loc="lower center")
    fig.tight_layout()
    _save(fig, Path(path))


def plot_leaderboard(board: Leaderboard, path: str | Path) -> None:
    ranking = board.ranking
    fig, ax = plt.subplots(figsize=(6, 0.5 * max(2, len(ranking)) + 1.2))
    names = [f"{i + 1}. {e.system}" for i, e in enumerate(ranking)]
    scores = [e.score for e in ranking]
    y = np.arange(len(ranking))[::-1]
    ax.barh(y, scores, color="tab:blue")
    for yi, s in zip(y, scores):
        ax.text(min(s, 1.0) + 0.01, yi, f"{s:.3f}", va="center", fontsize=8)
    ax.set_yticks(y)
    ax.set_yticklabels(names)
    ax.set_xlim(0, 1.12)
    ax.set_xlabel("average Line IU")
    fig.tight_layout()
    _save(fig, Path(path))


def render_overlay(image, labels) -> np.ndarray:
    """RGB page with each predicted line's boundary drawn in its palette color."""
    from .dataset_io import palette

    g = np.clip(np.rint(np.asarray(image, dtype=np.float64)), 0, 255).astype(np.uint8)
    rgb = np.stack([g, g, g], axis=-1)
    lab = np.asarray(labels)
    n = int(lab.max()) if lab.size else 0
    if n == 0:
        return rgb
    p = np.pad(lab, 1, mode="edge")
    edge = (
        (p[1:-1, 1:-1] != p[:-2, 1:-1])
        | (p[1:-1, 1:-1] != p[2:, 1:-1])
        | (p[1:-1, 1:-1] != p[1:-1, :-2])
        | (p[1:-1, 1:-1] != p[1:-1, 2:])
    ) & (lab > 0)
    rgb[edge] = palette(n)[lab[edge]]
    return rgb
