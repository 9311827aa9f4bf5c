"""Run configuration: a single YAML file, every default documented inline."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from .gpi import GpiConfig
from .raster import StructuringElement
from .tauch import TauchConfig

__all__ = ["ConfigError", "PostprocessConfig", "RunConfig", "load_config", "dump_config"]

PIPELINES = ("tauch", "gpi")
POSTPROCESS = ("off", "srcb", "close7x7")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PostprocessConfig:
    mode: str = "off"
    d_max: float | None = None
    g_min: int | None = None
    stroke: int = 2
    min_area: float | None = None

    def __post_init__(self):
        if self.mode not in POSTPROCESS:
            raise ConfigError(f"postprocess must be one of {POSTPROCESS}, got {self.mode!r}")


@dataclass(frozen=True)
class RunConfig:
    pipeline: str = "tauch"
    tauch: TauchConfig = field(default_factory=TauchConfig)
    gpi: GpiConfig = field(default_factory=GpiConfig)
    postprocess: PostprocessConfig = field(default_factory=PostprocessConfig)
    # per-manuscript maximum component area, filled by `calibrate`
    area_thresholds: dict[str, float] = field(default_factory=dict)
    # per-manuscript TAU-CH plausible height bounds (fractions of page height)
    height_bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    data_root: str | None = None
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.pipeline not in PIPELINES:
            raise ConfigError(f"pipeline must be one of {PIPELINES}, got {self.pipeline!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def tauch_for(self, manuscript: str) -> TauchConfig:
        if manuscript in self.height_bounds:
            return replace(self.tauch, plausible_height_bounds=tuple(self.height_bounds[manuscript]))
        return self.tauch


_DOCS = {
    "pipeline": "segmentation pipeline: tauch | gpi",
    "workers": "page-level worker processes (>= 1); results do not depend on it",
    "seed": "dataset seed used by `generate`",
    "data_root": "dataset root; the TEXTLINESEG_DATA environment variable overrides",
    "area_thresholds": "GPI max component area per manuscript (written by `calibrate`)",
    "height_bounds": "TAU-CH plausible char height bounds per manuscript (optional, `calibrate`)",
    "tauch": "TAU-CH pipeline parameters",
    "gpi": "GPI pipeline parameters",
    "postprocess": "optional refinement of either pipeline's output",
    "tauch.eta": "elongation sigma_u / sigma_v of the anisotropic Gaussian",
    "tauch.dilation_se": "horizontal dilation joining glyphs into lines",
    "tauch.blob_threshold": "'otsu' on the response over dilated ink, or a fixed level 0-255",
    "tauch.sigma_v_factor": "sigma_v as a multiple of the mean char height",
    "tauch.separator_factor": "separator threshold in mean char heights",
    "tauch.plausible_height_bounds": "char height interval as fractions of page height",
    "tauch.vertical_dilation": "text-region SE height in mean char heights",
    "tauch.min_blob_area": "drop marker blobs below this many char_height^2",
    "tauch.connectivity": "pixel connectivity, 4 or 8",
    "gpi.tv_weight": "total-variation weight (unit intensity range)",
    "gpi.tv_max_iter": "TV iterations cap",
    "gpi.tophat_radius": "top-hat disc radius in pixels",
    "gpi.blur_kw": "elongated blur width",
    "gpi.blur_kh": "elongated blur height",
    "gpi.column_valley_threshold": "column profile cut as a fraction of its maximum",
    "gpi.min_band_width": "narrowest accepted column band",
    "gpi.ellipse_width_factor": "dilation ellipse width in estimated line heights",
    "gpi.ellipse_height_factor": "dilation ellipse height in estimated line heights",
    "gpi.extrapolation_margin": "curve extension in pixels (null = 2 * blur_kw)",
    "gpi.min_blob_area_fraction": "drop blobs below this fraction of the band's median blob",
    "gpi.area_threshold_factor": "multiplier on the training-area percentile",
    "gpi.area_percentile": "nearest-rank percentile of training component areas",
    "gpi.connectivity": "pixel connectivity, 4 or 8",
    "postprocess.mode": "off | srcb | close7x7",
    "postprocess.d_max": "SRCB max pair distance (null = char height / 2)",
    "postprocess.g_min": "SRCB min contour gap (null = 4 * d_max)",
    "postprocess.stroke": "SRCB cut width in pixels",
    "postprocess.min_area": "SRCB cleanup area (null = 5% of median component)",
}


def _se_to_dict(se: StructuringElement) -> dict:
    return {"shape": se.shape, "size": list(se.size)}


def _se_from(d: Any) -> StructuringElement:
    if isinstance(d, StructuringElement):
        return d
    shape, size = d["shape"], list(d["size"])
    if shape == "rectangle":
        return StructuringElement.rectangle(*size)
    if shape == "ellipse":
        return StructuringElement.ellipse(*size)
    if shape == "circle":
        return StructuringElement.circle(*size)
    raise ConfigError(f"unknown structuring element {shape!r}")


def _section_dict(obj) -> dict:
    out = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, StructuringElement):
            v = _se_to_dict(v)
        elif isinstance(v, tuple):
            v = list(v)
        out[f.name] = v
    return out


def config_to_dict(cfg: RunConfig) -> dict:
    return {
        "pipeline": cfg.pipeline,
        "workers": cfg.workers,
        "seed": cfg.seed,
        "data_root": cfg.data_root,
        "area_thresholds": {k: float(v) for k, v in sorted(cfg.area_thresholds.items())},
        "height_bounds": {k: [float(x) for x in v] for k, v in sorted(cfg.height_bounds.items())},
        "tauch": _section_dict(cfg.tauch),
        "gpi": _section_dict(cfg.gpi),
        "postprocess": _section_dict(cfg.postprocess),
    }


def _build(cls, d: dict | None, convert: dict | None = None):
    d = dict(d or {})
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    for k, fn in (convert or {}).items():
        if k in d:
            d[k] = fn(d[k])
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{cls.__name__}: {exc}") from exc


def config_from_dict(d: dict) -> RunConfig:
    d = dict(d or {})
    tauch = _build(TauchConfig, d.pop("tauch", None), {
        "dilation_se": _se_from,
        "plausible_height_bounds": tuple,
    })
    gpi = _build(GpiConfig, d.pop("gpi", None))
    post = _build(PostprocessConfig, d.pop("postprocess", None))
    if "height_bounds" in d and d["height_bounds"]:
        d["height_bounds"] = {k: tuple(v) for k, v in d["height_bounds"].items()}
    return _build(RunConfig, {**d, "tauch": tauch, "gpi": gpi, "postprocess": post})


def _emit(lines: list[str], key: str, value, indent: int, path: str) -> None:
    pad = "  " * indent
    doc = _DOCS.get(path)
    if doc:
        lines.append(f"{pad}# {doc}")
    if path in ("tauch", "gpi", "postprocess"):
        lines.append(f"{pad}{key}:")
        for k, v in value.items():
            _emit(lines, k, v, indent + 1, f"{path}.{k}")
        return
    # short lists stay inline, mappings are always block style
    flow = None if isinstance(value, list) and value else False
    dumped = yaml.safe_dump({key: value}, default_flow_style=flow, sort_keys=False).rstrip("\n")
    lines.extend(pad + line for line in dumped.splitlines())


def dump_config(cfg: RunConfig) -> str:
    lines = ["# textlineseg run configuration"]
    for k, v in config_to_dict(cfg).items():
        _emit(lines, k, v, 0, k)
    return "\n".join(lines) + "\n"


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} not found")
    try:
        data = yaml.safe_load(p.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    return config_from_dict(data)
