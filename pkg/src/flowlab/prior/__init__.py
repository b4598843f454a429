from .evaluate import conditioning_stats, discrimination_stats, score_log_q
from .model import (
    ConditionalFlowPrior,
    ConditionedDecoder,
    FlowEncoder,
    PriorScore,
    load_prior,
    save_prior,
    stage_widths,
)
from .single_branch import SingleBranchAutoencoder, count_params, matched_single_branch
from .train import (
    BottleneckSearchConfig,
    BottleneckSearchResult,
    PriorTrainConfig,
    PriorTrainResult,
    bottleneck_search,
    stack_training_tensors,
    train_prior,
)

__all__ = [
    "conditioning_stats",
    "discrimination_stats",
    "score_log_q",
    "ConditionalFlowPrior",
    "ConditionedDecoder",
    "FlowEncoder",
    "PriorScore",
    "load_prior",
    "save_prior",
    "stage_widths",
    "SingleBranchAutoencoder",
    "count_params",
    "matched_single_branch",
    "BottleneckSearchConfig",
    "BottleneckSearchResult",
    "PriorTrainConfig",
    "PriorTrainResult",
    "bottleneck_search",
    "stack_training_tensors",
    "train_prior",
]
