"""textlineseg command line: generate, calibrate, segment, evaluate, leaderboard.

Exit codes: 0 success, 2 bad configuration, 3 bad dataset, 4 some pages failed.
"""

from __future__ import annotations

import functools
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from .config import ConfigError, RunConfig, dump_config, load_config
from .dataset_io import (
    DatasetError,
    PagePair,
    decode_instance_png,
    encode_instance_png,
    encode_rgb_png,
    read_gray,
    scan_dataset,
    write_png,
    write_ranking_csv,
    write_report,
)
from .filters import otsu_binarize
from .gpi import compute_area_threshold, gt_component_areas, run_gpi
from .metrics import METRIC_NAMES, aggregate, build_leaderboard, evaluate_page
from .postprocess import close_instances, srcb_postprocess
from .raster import connected_components, normalize_labels
from .synthgen import DEFAULT_COUNTS, default_families, family_seeds, generate_dataset
from .tauch import run_tauch

log = logging.getLogger("textlineseg")

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_PAGES = 4
DATA_ENV = "TEXTLINESEG_DATA"


def _guarded(fn):
    """Map library errors onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except DatasetError as exc:
            click.echo(f"data error: {exc}", err=True)
            sys.exit(EXIT_DATA)

    return wrapper


def _data_root(cfg: RunConfig, flag: str | None) -> Path:
    root = flag or os.environ.get(DATA_ENV) or cfg.data_root
    if not root:
        raise ConfigError(f"no data root: pass --data, set {DATA_ENV} or data_root in the config")
    return Path(root)


def _overrides(cfg: RunConfig, pipeline=None, postprocess=None, workers=None, seed=None) -> RunConfig:
    changes = {}
    if pipeline is not None:
        changes["pipeline"] = pipeline
    if postprocess is not None:
        changes["postprocess"] = replace(cfg.postprocess, mode=postprocess)
    if workers is not None:
        changes["workers"] = workers
    if seed is not None:
        changes["seed"] = seed
    try:
        return replace(cfg, **changes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _parse_counts(value: str) -> tuple[int, int, int]:
    try:
        parts = tuple(int(v) for v in value.split(","))
    except ValueError:
        parts = ()
    if len(parts) != 3 or min(parts) < 0:
        raise ConfigError(f"--counts expects three non-negative integers, got {value!r}")
    return parts


def _pool_map(fn, jobs: list, workers: int) -> list:
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


# -- segmentation ---------------------------------------------------------------


def segment_image(img: np.ndarray, cfg: RunConfig, manuscript: str) -> np.ndarray:
    """Run the configured pipeline and post-processing on one gray page."""
    if cfg.pipeline == "tauch":
        labels = run_tauch(img, cfg.tauch_for(manuscript))
    else:
        if manuscript not in cfg.area_thresholds:
            raise ConfigError(f"no GPI area threshold for {manuscript!r}; run `calibrate` first")
        labels = run_gpi(img, cfg.gpi, cfg.area_thresholds[manuscript])
    post = cfg.postprocess
    if post.mode == "srcb":
        labels = srcb_postprocess(labels > 0, post.d_max, post.g_min, post.stroke, post.min_area)
    elif post.mode == "close7x7":
        labels = close_instances(labels, 7)
    return normalize_labels(labels)


def _segment_job(job) -> tuple[str, str | None]:
    page, cfg, out = job
    try:
        labels = segment_image(read_gray(page.image), cfg, page.manuscript)
        write_png(out / page.manuscript / page.split / f"{page.page}.png", encode_instance_png(labels))
    except (ConfigError, DatasetError):
        raise
    except Exception as exc:  # one bad page must not stop the run
        return page.page, f"{type(exc).__name__}: {exc}"
    return page.page, None


# -- calibration ----------------------------------------------------------------


def _height_bounds(pages: list[PagePair]) -> tuple[float, float]:
    """Plausible glyph heights from binarized ink under the training GT, as page fractions."""
    fracs = []
    for p in pages:
        img = read_gray(p.image)
        text = decode_instance_png(p.gt.read_bytes()) > 0
        heights = [c.height for c in connected_components(otsu_binarize(img) & text)]
        if heights:
            fracs.append(float(np.median(heights)) / img.shape[0])
    if not fracs:
        raise DatasetError("no ink under the training ground truth")
    med = float(np.median(fracs))
    return round(0.5 * med, 6), round(2.0 * med, 6)


def calibrate_config(cfg: RunConfig, root: Path, height_bounds: bool = False) -> RunConfig:
    layout = scan_dataset(root)
    thresholds, bounds = {}, {}
    for ms in layout.manuscripts:
        train = [p for p in layout.select("train", ms) if p.gt is not None]
        if not train:
            raise DatasetError(f"{ms}: no annotated training pages")
        areas = []
        for p in train:
            areas.extend(gt_component_areas(decode_instance_png(p.gt.read_bytes()), cfg.gpi.connectivity))
        if not areas:
            raise DatasetError(f"{ms}: training ground truth has no text")
        thresholds[ms] = compute_area_threshold(areas, cfg.gpi)
        if height_bounds:
            bounds[ms] = _height_bounds(train)
    if not thresholds:
        raise DatasetError(f"{root}: no manuscripts found")
    return replace(cfg, area_thresholds=thresholds, height_bounds=bounds or cfg.height_bounds)


# -- evaluation -----------------------------------------------------------------


def evaluate_dir(pred_root: Path, pages: list[PagePair], system: str):
    """Score every annotated page; a missing prediction counts as an empty page."""
    by_ms: dict[str, list] = {}
    for p in pages:
        if p.gt is None:
            continue
        gt = decode_instance_png(p.gt.read_bytes())
        path = pred_root / p.manuscript / p.split / f"{p.page}.png"
        missing = not path.is_file()
        if missing:
            pred = np.zeros_like(gt)
        else:
            pred = decode_instance_png(path.read_bytes())
            if pred.shape != gt.shape:
                raise DatasetError(f"{path}: size {pred.shape[::-1]} differs from ground truth {gt.shape[::-1]}")
        pm = evaluate_page(pred, gt, page=p.page)
        by_ms.setdefault(p.manuscript, []).append(replace(pm, missing=True) if missing else pm)
    if not by_ms:
        raise DatasetError("no annotated pages to evaluate")
    return aggregate(system, by_ms)


def _print_entry(entry) -> None:
    head = f"{'manuscript':<26}" + "".join(f"{k.upper():>8}" for k in METRIC_NAMES)
    click.echo(head)
    for ms in entry.manuscripts:
        a = ms.averages
        click.echo(f"{ms.name:<26}" + "".join(f"{a[k]:>8.4f}" for k in METRIC_NAMES))
        for p in ms.pages:
            if p.missing:
                click.echo(f"  missing prediction: {p.page}")
    click.echo(f"{entry.system}: average LIU {entry.score:.4f}")


def _pages_for(root: Path, split: str | None) -> list[PagePair]:
    layout = scan_dataset(root)
    pages = layout.select(None if split == "all" else split)
    if not pages:
        raise DatasetError(f"{root}: no pages in split {split!r}")
    return pages


# -- commands -------------------------------------------------------------------

split_option = click.option(
    "--split", type=click.Choice(["train", "validation", "test", "all"]), default="test", show_default=True
)
data_option = click.option("--data", "data", type=click.Path(file_okay=False), help=f"dataset root (else ${DATA_ENV})")
workers_option = click.option("--workers", type=click.IntRange(min=1), help="worker processes")


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML run configuration")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
@_guarded
def cli(ctx, config_path, verbose):
    """Text-line segmentation pipelines and benchmark scoring."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")
    # calibrate may create the config file it is pointed at
    fresh = ctx.invoked_subcommand == "calibrate" and config_path and not Path(config_path).exists()
    ctx.obj = {"cfg": load_config(None if fresh else config_path), "config_path": config_path}


@cli.command()
@click.option("--out", type=click.Path(file_okay=False), help="dataset root to write")
@click.option("--seed", type=int, help="dataset seed (0 keeps the built-in family seeds)")
@click.option("--counts", default=",".join(map(str, DEFAULT_COUNTS)), show_default=True,
              help="pages per manuscript for train,validation,test")
@workers_option
@click.pass_obj
@_guarded
def generate(obj, out, seed, counts, workers):
    """Write the synthetic manuscripts."""
    cfg = _overrides(obj["cfg"], workers=workers, seed=seed)
    root = _data_root(cfg, out)
    families = family_seeds(default_families(), cfg.seed)
    summary = generate_dataset(root, families, _parse_counts(counts), cfg.workers)
    total = 0
    for ms, per_split in summary.items():
        n = sum(per_split.values())
        total += n
        click.echo(f"{ms}: " + " ".join(f"{s}={c}" for s, c in per_split.items()) + f" total={n}")
    click.echo(f"{total} pages written to {root}")


@cli.command()
@data_option
@click.option("--out", type=click.Path(dir_okay=False), help="config file to write (default: --config path)")
@click.option("--height-bounds", is_flag=True, help="also fit TAU-CH character height bounds")
@click.pass_obj
@_guarded
def calibrate(obj, data, out, height_bounds):
    """Fit per-manuscript parameters on the training pages only."""
    cfg = obj["cfg"]
    cfg = calibrate_config(cfg, _data_root(cfg, data), height_bounds)
    for ms, t in cfg.area_thresholds.items():
        click.echo(f"{ms}: area threshold {t:.1f}" + (f", height bounds {cfg.height_bounds[ms]}" if ms in cfg.height_bounds else ""))
    target = out or obj["config_path"]
    text = dump_config(cfg)
    if target:
        Path(target).write_text(text)
        click.echo(f"config written to {target}")
    else:
        click.echo(text, nl=False)


@cli.command()
@data_option
@split_option
@click.option("--pipeline", type=click.Choice(["tauch", "gpi"]))
@click.option("--postprocess", type=click.Choice(["off", "srcb", "close7x7"]))
@workers_option
@click.option("--out", required=True, type=click.Path(file_okay=False), help="prediction root")
@click.pass_obj
@_guarded
def segment(obj, data, split, pipeline, postprocess, workers, out):
    """Predict instance maps for every page of a split."""
    cfg = _overrides(obj["cfg"], pipeline, postprocess, workers)
    pages = _pages_for(_data_root(cfg, data), split)
    if cfg.pipeline == "gpi":
        missing = sorted({p.manuscript for p in pages} - set(cfg.area_thresholds))
        if missing:
            raise ConfigError(f"no GPI area threshold for {missing}; run `calibrate` first")
    out = Path(out)
    results = _pool_map(_segment_job, [(p, cfg, out) for p in pages], cfg.workers)
    failed = [(page, err) for page, err in results if err]
    for page, err in failed:
        log.error("%s: %s", page, err)
        click.echo(f"failed: {page}: {err}", err=True)
    click.echo(f"{len(results) - len(failed)}/{len(results)} pages segmented with {cfg.pipeline} into {out}")
    if failed:
        sys.exit(EXIT_PAGES)


@cli.command()
@click.argument("pred", type=click.Path(exists=True, file_okay=False))
@data_option
@split_option
@click.option("--out", required=True, type=click.Path(file_okay=False), help="report directory")
@click.option("--system", help="system name (default: prediction directory name)")
@click.option("--overlays", is_flag=True, help="also write prediction boundary overlays")
@click.pass_obj
@_guarded
def evaluate(obj, pred, data, split, out, system, overlays):
    """Score predictions against the ground truth."""
    from .plotting import plot_manuscript_metrics, render_overlay

    cfg = obj["cfg"]
    pred, out = Path(pred), Path(out)
    pages = _pages_for(_data_root(cfg, data), split)
    entry = evaluate_dir(pred, pages, system or pred.resolve().name)
    write_png(out / "report.json", write_report(entry, "json"))
    write_png(out / "report.csv", write_report(entry, "csv"))
    plot_manuscript_metrics(entry, out / "metrics.png")
    if overlays:
        for p in pages:
            path = pred / p.manuscript / p.split / f"{p.page}.png"
            labels = decode_instance_png(path.read_bytes()) if path.is_file() else 0
            img = read_gray(p.image)
            rgb = render_overlay(img, np.broadcast_to(labels, img.shape))
            write_png(out / "overlays" / p.manuscript / p.split / f"{p.page}.png", encode_rgb_png(rgb))
    _print_entry(entry)
    click.echo(f"reports written to {out}")


@cli.command()
@click.argument("preds", nargs=-1, required=True, type=click.Path(exists=True, file_okay=False))
@data_option
@split_option
@click.option("--out", required=True, type=click.Path(file_okay=False), help="report directory")
@click.pass_obj
@_guarded
def leaderboard(obj, preds, data, split, out):
    """Rank several prediction directories by average Line IU."""
    from .plotting import plot_leaderboard

    cfg = obj["cfg"]
    out = Path(out)
    pages = _pages_for(_data_root(cfg, data), split)
    names = [Path(p).resolve().name for p in preds]
    if len(set(names)) != len(names):
        raise ConfigError(f"system names must be distinct, got {names}")
    board = build_leaderboard([evaluate_dir(Path(p), pages, n) for p, n in zip(preds, names)])
    write_png(out / "leaderboard.json", write_report(board, "json"))
    write_png(out / "leaderboard.csv", write_report(board, "csv"))
    write_png(out / "ranking.csv", write_ranking_csv(board))
    plot_leaderboard(board, out / "leaderboard.png")
    for rank, e in enumerate(board.ranking, 1):
        click.echo(f"{rank:>3}  {e.system:<24} {e.score:.4f}")


def main(argv=None):
    cli.main(args=argv, prog_name="textlineseg")


if __name__ == "__main__":
    main()
