from .dataset import (
    GenConfig,
    augment,
    gen_dataset,
    gen_scene_specs,
    homogeneous_patch_spec,
    load_dataset,
    patch_masks,
    save_dataset,
)
from .geometry import AffineMotion, Ellipse, Polygon, affine_flow, convex_hull, grid_points
from .scene import FlowSample, SceneSpec, ShapeLayer, render_sample, visible_layers
from .texture import SinusoidTexture

__all__ = [
    "GenConfig",
    "augment",
    "gen_dataset",
    "gen_scene_specs",
    "homogeneous_patch_spec",
    "load_dataset",
    "patch_masks",
    "save_dataset",
    "AffineMotion",
    "Ellipse",
    "Polygon",
    "affine_flow",
    "convex_hull",
    "grid_points",
    "FlowSample",
    "SceneSpec",
    "ShapeLayer",
    "render_sample",
    "visible_layers",
    "SinusoidTexture",
]
