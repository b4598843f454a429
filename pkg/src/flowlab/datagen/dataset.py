"""Randomized scene sampling, augmentation, and the on-disk dataset layout."""

import dataclasses
import os
import re
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..core import load_png, read_flo, save_png, write_flo
from ..errors import SceneSpecError, UnsupportedAugmentationError
from .geometry import AffineMotion, Ellipse, Polygon, convex_hull
from .scene import FlowSample, SceneSpec, ShapeLayer, render_sample
from .texture import SinusoidTexture

__all__ = [
    "GenConfig",
    "gen_scene_specs",
    "gen_dataset",
    "augment",
    "save_dataset",
    "load_dataset",
    "homogeneous_patch_spec",
    "patch_masks",
]


@dataclass(frozen=True)
class GenConfig:
    """Sampling ranges for random layered scenes.

    Translations are drawn uniformly per component in [-trans_max,
    trans_max], rotations in [-rot_max_deg, rot_max_deg], isotropic scale in
    scale_range; each scene gets min_shapes..max_shapes foreground shapes.
    A shape's texture is homogeneous (flat color) with probability
    flat_shape_prob, putting textureless regions in the training
    distribution on purpose.
    """

    h: int = 64
    w: int = 64
    channels: int = 3
    min_shapes: int = 1
    max_shapes: int = 4
    rot_max_deg: float = 10.0
    scale_range: Tuple[float, float] = (0.9, 1.1)
    trans_max: float = 8.0
    shape_radius: Tuple[float, float] = (6.0, 16.0)
    n_waves: int = 6
    contrast: float = 0.35
    flat_shape_prob: float = 0.25

    def __post_init__(self):
        if self.h < 8 or self.w < 8:
            raise ValueError(f"resolution too small: {self.h}x{self.w}")
        if not 0 <= self.min_shapes <= self.max_shapes:
            raise ValueError(f"bad shape-count range [{self.min_shapes}, {self.max_shapes}]")
        if self.trans_max < 0 or self.rot_max_deg < 0:
            raise ValueError("motion ranges must be nonnegative")
        if not 0 < self.scale_range[0] <= self.scale_range[1]:
            raise ValueError(f"bad scale range {self.scale_range}")
        if not 0 <= self.flat_shape_prob <= 1:
            raise ValueError(f"flat_shape_prob must be in [0, 1], got {self.flat_shape_prob}")


def _random_motion(rng, cfg, center):
    return AffineMotion.from_params(
        angle_deg=rng.uniform(-cfg.rot_max_deg, cfg.rot_max_deg),
        scale=rng.uniform(*cfg.scale_range),
        translation=rng.uniform(-cfg.trans_max, cfg.trans_max, size=2),
        center=center,
    )


def _random_shape(rng, cfg):
    r_lo, r_hi = cfg.shape_radius
    margin = 0.2
    center = np.array(
        [
            rng.uniform(margin * cfg.w, (1 - margin) * cfg.w),
            rng.uniform(margin * cfg.h, (1 - margin) * cfg.h),
        ]
    )
    if rng.random() < 0.5:
        return Ellipse(
            center=center,
            rx=rng.uniform(r_lo, r_hi),
            ry=rng.uniform(r_lo, r_hi),
            angle_deg=rng.uniform(0.0, 180.0),
        )
    for _ in range(20):
        k = int(rng.integers(5, 9))
        angles = np.sort(rng.uniform(0, 2 * np.pi, size=k))
        radii = rng.uniform(r_lo, r_hi, size=k)
        pts = center + radii[:, None] * np.stack([np.cos(angles), np.sin(angles)], axis=-1)
        try:
            return Polygon(convex_hull(pts))
        except SceneSpecError:
            continue
    raise SceneSpecError("could not sample a non-degenerate polygon in 20 tries")


def _shape_center(shape):
    if isinstance(shape, Ellipse):
        return shape.center
    return shape.vertices.mean(0)


def gen_scene_specs(config, n, seed):
    """n scene specs with per-sample rngs spawned from (seed, index)."""
    if n < 1:
        raise ValueError(f"need n >= 1 samples, got {n}")
    specs = []
    for index, child in enumerate(np.random.SeedSequence(seed).spawn(n)):
        rng = np.random.default_rng(child)
        background = SinusoidTexture.random(
            rng, channels=config.channels, n_waves=config.n_waves, contrast=config.contrast
        )
        bg_center = np.array([(config.w - 1) / 2, (config.h - 1) / 2])
        bg_motion = _random_motion(rng, config, bg_center)
        layers = []
        for _ in range(int(rng.integers(config.min_shapes, config.max_shapes + 1))):
            shape = _random_shape(rng, config)
            if rng.random() < config.flat_shape_prob:
                texture = SinusoidTexture.flat(rng.uniform(0.1, 0.9, size=config.channels))
            else:
                texture = SinusoidTexture.random(
                    rng, channels=config.channels, n_waves=config.n_waves, contrast=config.contrast
                )
            layers.append(
                ShapeLayer(shape=shape, texture=texture, motion=_random_motion(rng, config, _shape_center(shape)))
            )
        specs.append(
            SceneSpec(
                h=config.h,
                w=config.w,
                background=background,
                bg_motion=bg_motion,
                layers=tuple(layers),
                seed=index,
            )
        )
    return specs


def gen_dataset(config, n, seed):
    """Render n samples; deterministic given (config, n, seed)."""
    return [render_sample(s) for s in gen_scene_specs(config, n, seed)]


def augment(sample, hflip=False, vflip=False, order_switch=False):
    """Flip and/or time-reverse a sample, transforming ground truth to match.

    Order switching swaps the frames, which makes the backward ground truth
    the forward one; it therefore needs a sample that carries the backward
    fields.
    """
    img1, img2 = sample.img1, sample.img2
    flow, occ = sample.flow, sample.occ
    bflow, bocc = sample.bflow, sample.bocc
    if order_switch:
        if bflow is None or bocc is None:
            raise UnsupportedAugmentationError(
                "order switch needs backward flow and occlusion on the sample"
            )
        img1, img2 = img2, img1
        flow, bflow = bflow, flow
        occ, bocc = bocc, occ

    def flip(arr, axis, neg_channel):
        if arr is None:
            return None
        out = np.flip(arr, axis=axis).copy()
        if neg_channel is not None and out.ndim == 3 and out.shape[-1] == 2:
            out[..., neg_channel] = -out[..., neg_channel]
        return out

    if hflip:
        img1, img2 = flip(img1, 1, None), flip(img2, 1, None)
        flow, bflow = flip(flow, 1, 0), flip(bflow, 1, 0)
        occ, bocc = flip(occ, 1, None), flip(bocc, 1, None)
    if vflip:
        img1, img2 = flip(img1, 0, None), flip(img2, 0, None)
        flow, bflow = flip(flow, 0, 1), flip(bflow, 0, 1)
        occ, bocc = flip(occ, 0, None), flip(bocc, 0, None)
    def _own(a):
        return None if a is None else a.copy()

    return FlowSample(
        img1=_own(img1),
        img2=_own(img2),
        flow=_own(flow),
        occ=_own(occ),
        bflow=_own(bflow),
        bocc=_own(bocc),
        spec=None,
        photo_err=None,
    )


def _quantize(img):
    return (np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_dataset(samples, outdir, config=None, seed=None):
    """Write samples in the numbered-file layout plus a manifest.

    Layout per sample index NNNNNN: _img1.png, _img2.png, _flow.flo,
    _bflow.flo, _occ.png, _bocc.png.  The manifest records the generator
    config and seed as sorted key=value lines; no timestamps, so identical
    generations produce identical trees.
    """
    os.makedirs(outdir, exist_ok=True)
    for i, s in enumerate(samples):
        stem = os.path.join(outdir, f"{i:06d}")
        save_png(stem + "_img1.png", _quantize(s.img1))
        save_png(stem + "_img2.png", _quantize(s.img2))
        if s.flow is not None:
            write_flo(stem + "_flow.flo", s.flow)
        if s.occ is not None:
            save_png(stem + "_occ.png", (s.occ * 255).astype(np.uint8))
        if s.bflow is not None:
            write_flo(stem + "_bflow.flo", s.bflow)
        if s.bocc is not None:
            save_png(stem + "_bocc.png", (s.bocc * 255).astype(np.uint8))
    lines = [f"n={len(samples)}"]
    if seed is not None:
        lines.append(f"seed={seed}")
    if config is not None:
        for f in dataclasses.fields(config):
            lines.append(f"{f.name}={getattr(config, f.name)}")
    with open(os.path.join(outdir, "manifest.txt"), "w") as fh:
        fh.write("\n".join(sorted(lines)) + "\n")


def load_dataset(indir):
    """Read a saved dataset back; missing per-sample files load as None.

    Images come back as float64 in [0, 1] (8-bit quantized), occlusion
    masks as {0, 1} uint8.
    """
    stems = sorted(
        m.group(1)
        for f in os.listdir(indir)
        if (m := re.fullmatch(r"(\d{6})_img1\.png", f))
    )
    if not stems:
        raise FileNotFoundError(f"no samples (NNNNNN_img1.png) found in {indir}")
    samples = []
    for stem in stems:
        p = os.path.join(indir, stem)

        def opt(path, loader):
            return loader(path) if os.path.exists(path) else None

        occ = opt(p + "_occ.png", load_png)
        bocc = opt(p + "_bocc.png", load_png)
        samples.append(
            FlowSample(
                img1=load_png(p + "_img1.png").astype(np.float64) / 255.0,
                img2=load_png(p + "_img2.png").astype(np.float64) / 255.0,
                flow=opt(p + "_flow.flo", read_flo),
                occ=None if occ is None else (occ > 127).astype(np.uint8),
                bflow=opt(p + "_bflow.flo", read_flo),
                bocc=None if bocc is None else (bocc > 127).astype(np.uint8),
            )
        )
    return samples


def homogeneous_patch_spec(seed=0, h=64, w=64, radius=13.0, translation=(3.5, 2.0)):
    """Scene built to expose the textureless failure of gradient-based data
    terms: a flat-colored patch translating over a static textured
    background, so nothing inside the patch constrains the motion."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(9100,)))
    background = SinusoidTexture.random(rng, channels=3, n_waves=6, contrast=0.3)
    # force a visible step at the patch boundary
    color = np.clip(background.base + np.where(background.base < 0.5, 0.35, -0.35), 0.05, 0.95)
    patch = Ellipse(
        center=np.array([w * 0.45, h * 0.5]),
        rx=radius,
        ry=radius * 0.85,
        angle_deg=rng.uniform(0.0, 180.0),
    )
    layer = ShapeLayer(
        shape=patch,
        texture=SinusoidTexture.flat(color),
        motion=AffineMotion.from_params(translation=translation),
    )
    return SceneSpec(h=h, w=w, background=background, bg_motion=AffineMotion.identity(), layers=(layer,), seed=seed)


def patch_masks(sample, margin=2.5):
    """(inside_patch, textured_background) boolean masks for a
    homogeneous-patch sample, both restricted to non-occluded pixels and
    eroded by ``margin`` pixels so neither straddles the boundary."""
    spec = sample.spec
    if spec is None or len(spec.layers) != 1:
        raise ValueError("patch_masks needs a rendered single-patch sample with its spec")
    from .geometry import grid_points

    pts = grid_points(spec.h, spec.w)
    sdf = spec.layers[0].shape.sdf(pts)
    free = sample.occ == 0
    return (sdf < -margin) & free, (sdf > margin) & free
