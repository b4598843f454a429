"""Compound unsupervised training loss.

Three terms: robust photometric warping error over the co-visible region,
the (negative) prior score of the predicted flow under a frozen prior
model, and an occlusion-area penalty that keeps the estimated occlusion
mask from swallowing the whole image.  The occlusion mask used during
training is a soft [0, 1] relaxation so it stays differentiable; hard
thresholding is for evaluation only.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import torch

from ..core.ops import _tensor, charbonnier, warp

__all__ = ["LossWeights", "soft_fb_occlusion", "compound_loss"]


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.1  # prior term
    eta: float = 0.25  # photometric robustness exponent
    occ_weight: float = 0.1  # occlusion-area penalty

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.eta <= 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if self.occ_weight < 0:
            raise ValueError(f"occ_weight must be >= 0, got {self.occ_weight}")


def soft_fb_occlusion(flow_fw, flow_bw, c1=0.01, c2=0.5, sharpness=1.0):
    """Differentiable forward-backward consistency mask in [0, 1].

    Sigmoid of the (scaled) margin between the squared mismatch of the
    composed flows and the tolerance c1*(|f_fw|^2+|f_bw'|^2)+c2; pixels
    whose forward flow leaves the frame saturate to 1.  Recovers the hard
    mask as sharpness grows.
    """
    flow_fw = _tensor(flow_fw)
    bw_at_target, valid = warp(flow_bw, flow_fw)
    diff = (flow_fw + bw_at_target).pow(2).sum(-1)
    bound = c1 * (flow_fw.pow(2).sum(-1) + bw_at_target.pow(2).sum(-1)) + c2
    soft = torch.sigmoid(sharpness * (diff - bound))
    return 1 - (1 - soft) * valid


def photometric_term(img1, img2, flow, occ, eta):
    """Occlusion-weighted mean of the channel-summed robust residual.

    Same quantity as the standalone photometric loss, restated here so the
    breakdown can reuse intermediate tensors; occ may be None (empty
    occluded set) or a soft mask.
    """
    img1 = _tensor(img1)
    warped, valid = warp(img2, flow)
    rho = charbonnier(img1 - warped, eta).sum(-1)
    weight = valid if occ is None else valid * (1 - _tensor(occ).to(valid.dtype))
    total = weight.sum()
    if total.item() == 0:
        return (rho * weight).sum() * 0.0
    return (rho * weight).sum() / total


def compound_loss(
    flow,
    img1,
    img2,
    occ,
    prior_model,
    weights: LossWeights,
) -> Tuple[torch.Tensor, dict]:
    """Total loss and a per-term breakdown (floats of the weighted terms).

    Gradients flow through the prior model's activations into ``flow`` but
    never into the prior's parameters, which the trainer keeps frozen.
    The breakdown's terms sum to its total exactly (same float additions).
    """
    photo = photometric_term(img1, img2, flow, occ, weights.eta)
    if weights.alpha > 0 and prior_model is not None:
        log_q = prior_model.log_prior(flow, img1).log_q
        prior_term = weights.alpha * (-log_q.mean())
    else:
        prior_term = photo.new_zeros(())
    if occ is not None and weights.occ_weight > 0:
        occ_term = weights.occ_weight * _tensor(occ).mean()
    else:
        occ_term = photo.new_zeros(())
    total = photo + prior_term + occ_term
    photo_f = float(photo.detach())
    prior_f = float(prior_term.detach())
    occ_f = float(occ_term.detach())
    breakdown = {
        "photometric": photo_f,
        "prior": prior_f,
        "occlusion_area": occ_f,
        "total": photo_f + prior_f + occ_f,
    }
    return total, breakdown
