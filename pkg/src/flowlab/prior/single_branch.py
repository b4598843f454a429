"""Single-branch ablation: encode flow AND image through one encoder.

With the image routed through the code, the bottleneck no longer forces
the decoder to consult the image at reconstruction time, and the model
degrades toward an unconditional flow autoencoder.  Used to demonstrate
why the two-branch layout matters; built at a matched parameter count so
the comparison is capacity-fair.
"""

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import ShapeError
from .model import FLOW_SCALE, NEG_SLOPE, PriorScore, init_conv, stage_widths

__all__ = ["SingleBranchAutoencoder", "matched_single_branch", "count_params"]


def count_params(model):
    return sum(p.numel() for p in model.parameters())


class SingleBranchAutoencoder(nn.Module):
    """One encoder over concat(flow, image); a skip-free deconv decoder."""

    def __init__(self, levels=4, base_width=4, width_mult=1.0, code_channels=32,
                 image_channels=3, seed=0):
        super().__init__()
        widths = [max(2, round(w * width_mult)) for w in stage_widths(levels, base_width)]
        self.levels = levels
        self.widths = widths
        self.code_channels = code_channels
        self.image_channels = image_channels
        self.flow_scale = FLOW_SCALE
        c = 2 + image_channels
        down = []
        for i in range(levels):
            out = code_channels if i == levels - 1 else widths[i]
            down.append(nn.Conv2d(c, out, 3, stride=2, padding=1))
            c = out
        self.down = nn.ModuleList(down)
        self.center = nn.Conv2d(code_channels, widths[-1], 3, padding=1)
        up = []
        c = widths[-1]
        for i in reversed(range(levels)):
            out = widths[max(i - 1, 0)]
            up.append(nn.ConvTranspose2d(c, out, 4, stride=2, padding=1))
            c = out
        self.up = nn.ModuleList(up)
        self.head = nn.Conv2d(c, 2, 3, padding=1)
        init_conv(self, torch.Generator().manual_seed(seed))

    def _prep(self, flow, image):
        dtype = next(self.parameters()).dtype
        flow = flow if torch.is_tensor(flow) else torch.as_tensor(flow)
        image = image if torch.is_tensor(image) else torch.as_tensor(image)
        flow = flow.to(dtype) if flow.dtype != dtype else flow
        image = image.to(dtype) if image.dtype != dtype else image
        squeeze = flow.ndim == 3
        if squeeze:
            flow, image = flow[None], image[None]
        if flow.shape[-1] != 2 or image.shape[-1] != self.image_channels:
            raise ShapeError(
                f"expected (..., H, W, 2) flow and (..., H, W, {self.image_channels}) image, "
                f"got {tuple(flow.shape)} and {tuple(image.shape)}"
            )
        d = 2**self.levels
        if flow.shape[-3] % d or flow.shape[-2] % d:
            raise ShapeError(f"spatial size not divisible by {d}")
        return flow, image, squeeze

    def encode(self, flow, image):
        """The joint code; unlike the two-branch encoder it sees the image."""
        flow, image, squeeze = self._prep(flow, image)
        x = torch.cat([flow / self.flow_scale, image], dim=-1).permute(0, 3, 1, 2)
        for i, conv in enumerate(self.down):
            x = conv(x)
            if i < len(self.down) - 1:
                x = F.leaky_relu(x, NEG_SLOPE)
        return x[0] if squeeze else x

    def _decode_bchw(self, code):
        x = F.leaky_relu(self.center(code), NEG_SLOPE)
        for dec in self.up:
            x = F.leaky_relu(dec(x), NEG_SLOPE)
        return self.head(x) * self.flow_scale

    def reconstruct(self, flow, image):
        flow, image, squeeze = self._prep(flow, image)
        code = self.encode(flow, image)
        out = self._decode_bchw(code).permute(0, 2, 3, 1)
        return out[0] if squeeze else out

    def log_prior(self, flow, image):
        flow_t = flow if torch.is_tensor(flow) else torch.as_tensor(flow)
        if not flow_t.is_floating_point():
            flow_t = flow_t.to(torch.get_default_dtype())
        residual = self.reconstruct(flow_t, image) - flow_t
        dims = tuple(range(residual.ndim - 3, residual.ndim))
        return PriorScore(log_q=-(residual**2).mean(dims), residual=residual)


def matched_single_branch(reference, seed=0, tol=0.10):
    """Build a single-branch model whose parameter count is within ``tol``
    of the reference two-branch prior, by scaling channel widths."""
    target = count_params(reference)
    mult = 1.0
    best = None
    for _ in range(12):
        model = SingleBranchAutoencoder(
            levels=reference.levels,
            base_width=reference.base_width,
            width_mult=mult,
            code_channels=reference.code_channels,
            image_channels=reference.image_channels,
            seed=seed,
        )
        p = count_params(model)
        rel = abs(p - target) / target
        if best is None or rel < best[0]:
            best = (rel, model)
        if rel <= tol / 2:
            break
        mult *= (target / p) ** 0.5
    rel, model = best
    if rel > tol:
        raise RuntimeError(
            f"could not match parameter count within {tol:.0%}: best {rel:.1%} "
            f"({count_params(model)} vs {target})"
        )
    return model
