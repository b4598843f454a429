"""Unsupervised predictor training against a frozen prior.

The trainer never reads ground-truth flow from its training samples; flow
files exist there only for evaluation sets.  With forward-backward
occlusion handling each step predicts both directions, masks each data
term with the soft consistency mask, and averages the two directional
losses.  All randomness (batching, flip augmentation) comes from one
seeded generator, so runs are reproducible and resumable bit-exactly.
"""

import hashlib
import math
from dataclasses import asdict, dataclass
from typing import List, Optional

import numpy as np
import torch

from ..core.metrics import epe
from ..errors import TrainingDivergedError
from .loss import LossWeights, compound_loss, soft_fb_occlusion

__all__ = ["FlowTrainConfig", "FlowTrainResult", "train_flow", "evaluate_epe", "param_checksum"]


@dataclass(frozen=True)
class FlowTrainConfig:
    alpha: float = 0.1
    eta: float = 0.25
    occlusion_mode: str = "forward-backward"  # or "none"
    occ_weight: float = 0.1
    fb_c1: float = 0.01
    fb_c2: float = 0.5
    lr: float = 1e-4
    lr_halve_every: int = 100_000
    batch_size: int = 4
    max_steps: int = 20_000
    seed: int = 0
    hflip: bool = True
    vflip: bool = True
    order_switch: bool = True
    log_every: int = 50
    eval_every: int = 500

    def __post_init__(self):
        if self.alpha < 0 or self.eta <= 0:
            raise ValueError("need alpha >= 0 and eta > 0")
        if self.occlusion_mode not in ("none", "forward-backward"):
            raise ValueError(f"unknown occlusion mode {self.occlusion_mode!r}")
        if self.batch_size < 1 or self.max_steps < 0:
            raise ValueError("batch_size must be >= 1 and max_steps >= 0")


@dataclass
class FlowTrainResult:
    model: torch.nn.Module
    records: List[dict]
    steps: int
    final_eval_epe: Optional[float]
    resume_state: dict


# config fields that define the training trajectory; a resumed run must
# keep these identical (max_steps and logging cadence may change)
_TRAJECTORY_FIELDS = (
    "alpha",
    "eta",
    "occlusion_mode",
    "occ_weight",
    "fb_c1",
    "fb_c2",
    "lr",
    "lr_halve_every",
    "batch_size",
    "seed",
    "hflip",
    "vflip",
    "order_switch",
)


def param_checksum(model):
    """Stable digest of all parameter bytes; detects any weight change."""
    h = hashlib.sha256()
    for name, p in sorted(model.state_dict().items()):
        h.update(name.encode())
        h.update(p.detach().cpu().numpy().tobytes())
    return h.hexdigest()


def _stack_images(samples):
    if not samples:
        raise ValueError("training set is empty")
    shapes = {s.img1.shape for s in samples}
    if len(shapes) != 1:
        raise ValueError(f"samples disagree on resolution: {sorted(shapes)}")
    img1 = torch.from_numpy(np.stack([s.img1 for s in samples])).float()
    img2 = torch.from_numpy(np.stack([s.img2 for s in samples])).float()
    return img1, img2


def evaluate_epe(model, samples, batch_size=8):
    """Mean over samples of the per-sample mean endpoint error (all pixels)."""
    missing = [i for i, s in enumerate(samples) if s.flow is None]
    if missing:
        raise ValueError(f"evaluation samples need ground-truth flow: missing at {missing[:5]}")
    img1, img2 = _stack_images(samples)
    out = []
    with torch.no_grad():
        for i in range(0, len(samples), batch_size):
            out.append(model(img1[i : i + batch_size], img2[i : i + batch_size]))
    pred = torch.cat(out).numpy()
    return float(np.mean([epe(pred[i], s.flow) for i, s in enumerate(samples)]))


def _validate_compat(model, prior_model, cfg, h, w):
    if cfg.alpha > 0:
        if prior_model is None:
            raise ValueError("alpha > 0 needs a prior model")
        if prior_model.flow_scale != model.flow_scale:
            raise ValueError(
                f"flow-scale mismatch: prior {prior_model.flow_scale} vs "
                f"predictor {model.flow_scale}"
            )
        if prior_model.image_channels != model.image_channels:
            raise ValueError("prior and predictor disagree on image channels")
        d = 2**prior_model.levels
        if h % d or w % d:
            raise ValueError(f"resolution {h}x{w} incompatible with prior levels {prior_model.levels}")
    d = 2**model.levels
    if h % d or w % d:
        raise ValueError(f"resolution {h}x{w} incompatible with predictor levels {model.levels}")


def train_flow(samples, prior_model, cfg, model, eval_samples=None, resume=None):
    """Train ``model`` with the compound loss; returns the model plus an
    append-only list of log records (training terms and periodic held-out
    EPE rows).

    ``resume``: the ``extra`` payload of a checkpoint written by the CLI
    trainer; training continues from the stored step with restored
    optimizer and sampler state, reproducing the uninterrupted run.
    """
    img1s, img2s = _stack_images(samples)
    n, h, w = img1s.shape[0], img1s.shape[1], img1s.shape[2]
    _validate_compat(model, prior_model, cfg, h, w)

    if prior_model is not None:
        prior_model.eval()
        for p in prior_model.parameters():
            p.requires_grad_(False)

    weights = LossWeights(
        alpha=cfg.alpha,
        eta=cfg.eta,
        occ_weight=cfg.occ_weight if cfg.occlusion_mode == "forward-backward" else 0.0,
    )
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    gen = torch.Generator().manual_seed(cfg.seed)
    start_step = 0
    if resume is not None:
        stored = resume.get("config", {})
        here = asdict(cfg)
        mismatched = {
            k: (here[k], stored[k])
            for k in _TRAJECTORY_FIELDS
            if k in stored and stored[k] != here[k]
        }
        if mismatched:
            raise ValueError(f"resume config mismatch: {mismatched}")
        opt.load_state_dict(resume["optimizer"])
        gen.set_state(torch.as_tensor(resume["gen_state"], dtype=torch.uint8))
        start_step = int(resume["step"])

    records: List[dict] = []
    model.train()
    last_eval = None
    step = start_step
    while step < cfg.max_steps:
        step += 1
        lr = cfg.lr * 0.5 ** ((step - 1) // cfg.lr_halve_every)
        for g in opt.param_groups:
            g["lr"] = lr
        idx = torch.randint(0, n, (min(cfg.batch_size, n),), generator=gen)
        i1, i2 = img1s[idx], img2s[idx]
        # paper-style augmentation: flips and frame-order switching only,
        # drawn per step, applied to images (no labels are involved)
        flips = torch.rand(3, generator=gen)
        if cfg.hflip and flips[0] < 0.5:
            i1, i2 = i1.flip(2), i2.flip(2)
        if cfg.vflip and flips[1] < 0.5:
            i1, i2 = i1.flip(1), i2.flip(1)
        if cfg.order_switch and flips[2] < 0.5:
            i1, i2 = i2, i1

        f_fw = model(i1, i2)
        if not torch.isfinite(f_fw).all():
            raise TrainingDivergedError(f"predicted flow became non-finite at step {step}")
        if cfg.occlusion_mode == "forward-backward":
            f_bw = model(i2, i1)
            occ_fw = soft_fb_occlusion(f_fw, f_bw, cfg.fb_c1, cfg.fb_c2)
            occ_bw = soft_fb_occlusion(f_bw, f_fw, cfg.fb_c1, cfg.fb_c2)
            loss_fw, bd_fw = compound_loss(f_fw, i1, i2, occ_fw, prior_model, weights)
            loss_bw, bd_bw = compound_loss(f_bw, i2, i1, occ_bw, prior_model, weights)
            loss = 0.5 * (loss_fw + loss_bw)
            bd = {k: 0.5 * (bd_fw[k] + bd_bw[k]) for k in bd_fw}
        else:
            loss, bd = compound_loss(f_fw, i1, i2, None, prior_model, weights)
        if not math.isfinite(float(loss.detach())):
            raise TrainingDivergedError(f"flow training loss became non-finite at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()

        if step % cfg.log_every == 0 or step == cfg.max_steps:
            records.append({"step": step, "lr": lr, **bd})
        if eval_samples is not None and cfg.eval_every and (
            step % cfg.eval_every == 0 or step == cfg.max_steps
        ):
            model.eval()
            last_eval = evaluate_epe(model, eval_samples)
            model.train()
            records.append({"step": step, "eval_epe": last_eval})

    model.eval()
    resume_state = {
        "config": asdict(cfg),
        "optimizer": opt.state_dict(),
        "gen_state": gen.get_state(),
        "step": step,
    }
    return FlowTrainResult(
        model=model,
        records=records,
        steps=step,
        final_eval_epe=last_eval,
        resume_state=resume_state,
    )
