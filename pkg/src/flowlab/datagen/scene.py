"""Layered scene model and exact ground-truth rendering.

A scene is an infinite textured background plane plus foreground shape
layers, ordered far to near (later list entries are nearer).  Every layer
moves by its own affine point transform between the two frames.  Because
layer textures are closed-form functions of the layer's frame-1
coordinates, both frames render by direct evaluation, and ground-truth
flow and occlusion follow from the layer geometry with no approximation.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import warp
from ..errors import SceneSpecError
from .geometry import AffineMotion, grid_points
from .texture import SinusoidTexture

__all__ = ["ShapeLayer", "SceneSpec", "FlowSample", "render_sample", "visible_layers"]

# soft rasterization: coverage ramps from 1 to 0 across one pixel of sdf
def _coverage(sdf):
    return np.clip(0.5 - sdf, 0.0, 1.0)


@dataclass(frozen=True)
class ShapeLayer:
    shape: object  # Polygon or Ellipse
    texture: SinusoidTexture
    motion: AffineMotion


@dataclass(frozen=True)
class SceneSpec:
    h: int
    w: int
    background: SinusoidTexture
    bg_motion: AffineMotion
    layers: tuple = ()
    seed: Optional[int] = None

    def __post_init__(self):
        if self.h < 8 or self.w < 8:
            raise SceneSpecError(f"scene must be at least 8x8, got {self.h}x{self.w}")
        object.__setattr__(self, "layers", tuple(self.layers))
        chans = {self.background.channels} | {l.texture.channels for l in self.layers}
        if len(chans) != 1:
            raise SceneSpecError(f"layer textures disagree on channel count: {sorted(chans)}")


@dataclass
class FlowSample:
    """One training/evaluation item: an image pair with exact ground truth.

    occ marks frame-1 pixels whose surface is hidden (or out of frame) in
    frame 2; bflow/bocc are the frame-2-to-frame-1 counterparts.
    photo_err reports the masked mean absolute warping residual, a
    rendering self-check dominated by bilinear interpolation error.
    """

    img1: np.ndarray
    img2: np.ndarray
    flow: np.ndarray
    occ: np.ndarray
    bflow: Optional[np.ndarray] = None
    bocc: Optional[np.ndarray] = None
    spec: Optional[SceneSpec] = None
    photo_err: Optional[float] = None

    @property
    def shape(self):
        return self.img1.shape[:2]


def _in_frame(pts, h, w):
    x, y = pts[..., 0], pts[..., 1]
    return (x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1)


def visible_layers(spec):
    """Per-pixel index of the visible layer in each frame (-1 = background).

    Membership is the hard inside test: a foreground layer owns a pixel iff
    the pixel center is inside it and no nearer layer claims it.
    """
    pts = grid_points(spec.h, spec.w)
    vis1 = np.full((spec.h, spec.w), -1, dtype=np.int64)
    vis2 = np.full((spec.h, spec.w), -1, dtype=np.int64)
    for i, layer in enumerate(spec.layers):
        vis1[layer.shape.inside(pts)] = i
        vis2[layer.shape.inside(layer.motion.inverse().apply(pts))] = i
    return vis1, vis2


def render_sample(spec):
    """Render both frames and the exact forward/backward flow and occlusion."""
    h, w = spec.h, spec.w
    pts = grid_points(h, w)
    inv_motions = [l.motion.inverse() for l in spec.layers]
    bg_inv = spec.bg_motion.inverse()

    img1 = spec.background.eval(pts)
    img2 = spec.background.eval(bg_inv.apply(pts))
    for layer, inv in zip(spec.layers, inv_motions):
        cov1 = _coverage(layer.shape.sdf(pts))[..., None]
        img1 = img1 * (1 - cov1) + layer.texture.eval(pts) * cov1
        pre = inv.apply(pts)
        cov2 = _coverage(layer.shape.sdf(pre))[..., None]
        img2 = img2 * (1 - cov2) + layer.texture.eval(pre) * cov2
    img1 = np.clip(img1, 0.0, 1.0)
    img2 = np.clip(img2, 0.0, 1.0)

    vis1, vis2 = visible_layers(spec)

    flow = spec.bg_motion.flow_at(pts)
    bflow = bg_inv.flow_at(pts)
    for i, (layer, inv) in enumerate(zip(spec.layers, inv_motions)):
        flow = np.where((vis1 == i)[..., None], layer.motion.flow_at(pts), flow)
        bflow = np.where((vis2 == i)[..., None], inv.flow_at(pts), bflow)

    # a frame-1 pixel is occluded iff its target leaves the frame or a
    # strictly nearer layer covers the target point in frame 2
    target = pts + flow
    occ = ~_in_frame(target, h, w)
    source = pts + bflow
    bocc = ~_in_frame(source, h, w)
    for j, (layer, inv) in enumerate(zip(spec.layers, inv_motions)):
        occ |= layer.shape.inside(inv.apply(target)) & (vis1 < j)
        bocc |= layer.shape.inside(source) & (vis2 < j)

    warped, valid = warp(img2, flow)
    keep = (occ == 0) & (valid.numpy() == 1)
    resid = np.abs(img1 - warped.numpy()).mean(-1)
    photo_err = float(resid[keep].mean()) if keep.any() else 0.0

    return FlowSample(
        img1=img1,
        img2=img2,
        flow=flow,
        occ=occ.astype(np.uint8),
        bflow=bflow,
        bocc=bocc.astype(np.uint8),
        spec=spec,
        photo_err=photo_err,
    )
