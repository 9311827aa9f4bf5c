"""Text-line segmentation of manuscript pages: two classical pipelines,
a contour-based post-processing step, line-level evaluation metrics and a
synthetic page generator to exercise them."""

from .metrics import PageMetrics, evaluate_page
from .gpi import GpiConfig, run_gpi
from .tauch import TauchConfig, run_tauch
from .postprocess import srcb_postprocess
from .synthgen import PageSpec, generate_page

__version__ = "0.1.0"

__all__ = [
    "PageMetrics",
    "evaluate_page",
    "GpiConfig",
    "run_gpi",
    "TauchConfig",
    "run_tauch",
    "srcb_postprocess",
    "PageSpec",
    "generate_page",
]
