"""Visualisation helpers: flow colorisation, error maps, PNG I/O."""

import matplotlib

matplotlib.use("Agg")

import numpy as np
from matplotlib.colors import hsv_to_rgb
from PIL import Image

__all__ = ["colorize_flow", "error_heatmap", "save_png", "load_png"]


def colorize_flow(flow, max_radius=None):
    """Map a flow field to an RGB uint8 image on an HSV color wheel.

    Direction controls hue (opposite flows sit 180 degrees apart on the
    wheel), magnitude controls saturation so zero flow renders white, and
    saturation clips to 1 at ``max_radius`` (the field's maximum magnitude
    when not given, so the image always uses the full wheel).
    """
    flow = np.asarray(flow, dtype=np.float64)
    if flow.ndim != 3 or flow.shape[-1] != 2:
        raise ValueError(f"expected (H, W, 2) flow, got {flow.shape}")
    u, v = flow[..., 0], flow[..., 1]
    mag = np.sqrt(u * u + v * v)
    if max_radius is None:
        max_radius = mag.max()
    if max_radius <= 0:
        max_radius = 1.0
    hue = (np.arctan2(-v, -u) / (2 * np.pi) + 0.5) % 1.0
    sat = np.clip(mag / max_radius, 0.0, 1.0)
    hsv = np.stack([hue, sat, np.ones_like(sat)], axis=-1)
    rgb = hsv_to_rgb(hsv)
    return (rgb * 255.0 + 0.5).astype(np.uint8)


def error_heatmap(flow_est, flow_gt, vmax=None):
    """Per-pixel endpoint error rendered with the inferno colormap."""
    flow_est = np.asarray(flow_est, dtype=np.float64)
    flow_gt = np.asarray(flow_gt, dtype=np.float64)
    if flow_est.shape != flow_gt.shape:
        raise ValueError(
            f"flow shape mismatch: {flow_est.shape} vs {flow_gt.shape}"
        )
    err = np.sqrt(((flow_est - flow_gt) ** 2).sum(-1))
    if vmax is None:
        vmax = err.max()
    if vmax <= 0:
        vmax = 1.0
    rgba = matplotlib.colormaps["inferno"](np.clip(err / vmax, 0.0, 1.0))
    return (rgba[..., :3] * 255.0 + 0.5).astype(np.uint8)


def save_png(path, image):
    """Write a uint8 or [0, 1] float image, grayscale or RGB, as PNG."""
    image = np.asarray(image)
    if image.dtype != np.uint8:
        image = (np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(image).save(path)


def load_png(path):
    """Read a PNG as a uint8 array, (H, W) for grayscale or (H, W, 3) RGB."""
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        return np.asarray(im)
