from .loss import LossWeights, compound_loss, soft_fb_occlusion
from .model import FlowPredictor, load_predictor, save_predictor
from .train import (
    FlowTrainConfig,
    FlowTrainResult,
    evaluate_epe,
    param_checksum,
    train_flow,
)

__all__ = [
    "LossWeights",
    "compound_loss",
    "soft_fb_occlusion",
    "FlowPredictor",
    "load_predictor",
    "save_predictor",
    "FlowTrainConfig",
    "FlowTrainResult",
    "evaluate_epe",
    "param_checksum",
    "train_flow",
]
