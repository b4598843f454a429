from .flo_io import (
    FLO_MAGIC,
    FloDimensionError,
    FloFormatError,
    FloMagicError,
    FloTruncatedError,
    read_flo,
    write_flo,
)
from .metrics import epe, error_rate
from .ops import (
    EmptyCovisibleWarning,
    charbonnier,
    fb_occlusion,
    photometric_loss,
    warp,
)
from .viz import colorize_flow, error_heatmap, load_png, save_png

__all__ = [
    "FLO_MAGIC",
    "FloDimensionError",
    "FloFormatError",
    "FloMagicError",
    "FloTruncatedError",
    "read_flo",
    "write_flo",
    "epe",
    "error_rate",
    "EmptyCovisibleWarning",
    "charbonnier",
    "fb_occlusion",
    "photometric_loss",
    "warp",
    "colorize_flow",
    "error_heatmap",
    "load_png",
    "save_png",
]
