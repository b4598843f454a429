"""Training loop and coding-length search for the flow prior.

The search realizes the information bottleneck without estimating mutual
information: train at a coding length, check the converged autoencoding
loss e*, and shrink the code (powers of two, descending) until the loss
finally exceeds the threshold lambda.  That first capacity-starved model
is the one whose reconstructions must lean on the image.
"""

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np
import torch

from ..errors import TrainingDivergedError
from .model import ConditionalFlowPrior

__all__ = [
    "PriorTrainConfig",
    "BottleneckSearchConfig",
    "PriorTrainResult",
    "BottleneckSearchResult",
    "stack_training_tensors",
    "train_prior",
    "bottleneck_search",
]


@dataclass(frozen=True)
class PriorTrainConfig:
    lr: float = 1e-4
    lr_halve_every: int = 100_000
    batch_size: int = 8
    max_steps: int = 6000
    convergence_window: int = 500
    convergence_rtol: float = 1e-3
    # consecutive sub-rtol windows required; window means of noisy batch
    # losses fluctuate more than the late-stage trend, so one quiet window
    # is routinely a fluke
    convergence_patience: int = 3
    seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.max_steps < 1:
            raise ValueError("lr, batch_size, max_steps must be positive")
        if self.convergence_window < 1 or self.convergence_patience < 1:
            raise ValueError("convergence_window and convergence_patience must be >= 1")


@dataclass(frozen=True)
class BottleneckSearchConfig:
    lam: float = 0.5
    initial_k: int = 6
    levels: int = 4
    base_width: int = 4
    image_channels: int = 3
    train: PriorTrainConfig = field(default_factory=PriorTrainConfig)

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError(f"stopping threshold lambda must be > 0, got {self.lam}")
        if not 0 <= self.initial_k <= 10:
            raise ValueError(f"initial_k must be in [0, 10], got {self.initial_k}")


@dataclass
class PriorTrainResult:
    model: torch.nn.Module
    e_star: float
    steps: int
    converged: bool
    loss_log: List[Tuple[int, float]]  # (step, window-smoothed loss)


@dataclass
class BottleneckSearchResult:
    model: torch.nn.Module
    trials: List[Tuple[int, float]]  # (code_channels, e_star), search order
    exhausted: bool
    results: List[PriorTrainResult]


def stack_training_tensors(samples):
    """(flows, images) float32 stacks from samples that carry ground truth."""
    if not samples:
        raise ValueError("dataset is empty")
    missing = [i for i, s in enumerate(samples) if s.flow is None]
    if missing:
        raise ValueError(f"samples without flow ground truth cannot train the prior: {missing[:5]}")
    shapes = {s.img1.shape for s in samples}
    if len(shapes) != 1:
        raise ValueError(f"samples disagree on resolution: {sorted(shapes)}")
    flows = torch.from_numpy(np.stack([s.flow for s in samples])).float()
    images = torch.from_numpy(np.stack([s.img1 for s in samples])).float()
    return flows, images


def train_prior(samples, model, cfg):
    """Minimize the mean squared flow-reconstruction error to convergence.

    Convergence: the window-mean loss improves by less than
    ``convergence_rtol`` (relatively) from one ``convergence_window`` to
    the next, ``convergence_patience`` windows in a row, or ``max_steps``
    is hit.  Returns the model and e*, the final window-mean loss in
    unscaled flow units.
    """
    flows, images = stack_training_tensors(samples)
    n = len(flows)
    gen = torch.Generator().manual_seed(cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    model.train()

    losses = []
    loss_log = []
    prev_window: Optional[float] = None
    quiet_windows = 0
    converged = False
    step = 0
    while step < cfg.max_steps:
        step += 1
        lr = cfg.lr * 0.5 ** ((step - 1) // cfg.lr_halve_every)
        for g in opt.param_groups:
            g["lr"] = lr
        idx = torch.randint(0, n, (min(cfg.batch_size, n),), generator=gen)
        recon = model.reconstruct(flows[idx], images[idx])
        loss = ((recon - flows[idx]) ** 2).mean()
        if not math.isfinite(loss.item()):
            raise TrainingDivergedError(
                f"prior training loss became {loss.item()} at step {step} "
                f"(last window mean {prev_window})"
            )
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(loss.item())
        if step % cfg.log_every == 0:
            loss_log.append((step, float(np.mean(losses[-cfg.log_every:]))))
        if step % cfg.convergence_window == 0:
            window = float(np.mean(losses[-cfg.convergence_window:]))
            if prev_window is not None:
                improved = (prev_window - window) / max(prev_window, 1e-12)
                quiet_windows = quiet_windows + 1 if improved < cfg.convergence_rtol else 0
                if quiet_windows >= cfg.convergence_patience:
                    converged = True
                    break
            prev_window = window

    e_star = float(np.mean(losses[-min(cfg.convergence_window, len(losses)):]))
    model.eval()
    return PriorTrainResult(
        model=model, e_star=e_star, steps=step, converged=converged, loss_log=loss_log
    )


def bottleneck_search(samples, cfg):
    """Descend code sizes 2^initial_k, 2^(initial_k-1), ... until the
    converged loss exceeds lambda; that model is returned.  If even one
    code channel reconstructs too well, the last model comes back with
    ``exhausted=True``."""
    if not samples:
        raise ValueError("dataset is empty")
    trials = []
    results = []
    for k in range(cfg.initial_k, -1, -1):
        code_channels = 2**k
        model = ConditionalFlowPrior(
            levels=cfg.levels,
            base_width=cfg.base_width,
            code_channels=code_channels,
            image_channels=cfg.image_channels,
            seed=cfg.train.seed + k,
        )
        res = train_prior(samples, model, replace(cfg.train, seed=cfg.train.seed + k))
        trials.append((code_channels, res.e_star))
        results.append(res)
        if res.e_star > cfg.lam:
            return BottleneckSearchResult(
                model=res.model, trials=trials, exhausted=False, results=results
            )
    return BottleneckSearchResult(
        model=results[-1].model, trials=trials, exhausted=True, results=results
    )
