"""Image-conditioned autoencoding prior over flow fields.

Two branches: an encoder that sees ONLY the flow and compresses it to a
small code, and a U-shaped decoder that sees the image, receives the code
at its center, and reconstructs the flow.  The prior's log-density of a
flow given an image is the negative mean squared reconstruction error, so
a flow the decoder can rebuild from a narrow code plus the image is
"likely" under the prior.

Public entry points take channels-last arrays, (H, W, 2) flows and
(H, W, C) images, optionally with a leading batch dimension; internals run
channels-first.
"""

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from ..checkpoint import load_checkpoint, save_checkpoint
from ..errors import ShapeError

__all__ = [
    "PriorScore",
    "FlowEncoder",
    "ConditionedDecoder",
    "ConditionalFlowPrior",
    "stage_widths",
    "save_prior",
    "load_prior",
]

NEG_SLOPE = 0.1
FLOW_SCALE = 20.0


def stage_widths(levels, base_width):
    """Contracting channel progression: doubles per level, capped at 16x."""
    return [base_width * 2 ** min(i, 4) for i in range(levels)]


def init_conv(module, generator):
    """Fan-in-scaled normal init, seeded; zero biases."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
            std = (2.0 / (fan_in * (1 + NEG_SLOPE**2))) ** 0.5
            with torch.no_grad():
                m.weight.copy_(
                    torch.randn(m.weight.shape, generator=generator, dtype=m.weight.dtype) * std
                )
                if m.bias is not None:
                    m.bias.zero_()


@dataclass
class PriorScore:
    """log_q = -mean((reconstruction - flow)^2); residual keeps the field."""

    log_q: torch.Tensor
    residual: torch.Tensor


def _to_bchw(x, channels_name, want_ch=None, dtype=None):
    x = x if torch.is_tensor(x) else torch.as_tensor(x)
    if not x.is_floating_point():
        x = x.to(dtype or torch.get_default_dtype())
    elif dtype is not None and x.dtype != dtype:
        x = x.to(dtype)
    if x.ndim == 3:
        x = x[None]
        squeeze = True
    elif x.ndim == 4:
        squeeze = False
    else:
        raise ShapeError(f"{channels_name}: expected 3 or 4 dims, got shape {tuple(x.shape)}")
    if want_ch is not None and x.shape[-1] != want_ch:
        raise ShapeError(f"{channels_name}: expected {want_ch} channels, got {x.shape[-1]}")
    return x.permute(0, 3, 1, 2), squeeze


class FlowEncoder(nn.Module):
    """Flow-only branch: stride-2 convolutions down to the code.

    The last convolution has ``code_channels`` kernels and no nonlinearity;
    its channel count is the coding length that realizes the bottleneck.
    """

    def __init__(self, levels, base_width, code_channels, in_channels=2):
        super().__init__()
        widths = stage_widths(levels, base_width)
        convs = []
        c = in_channels
        for i in range(levels):
            out = code_channels if i == levels - 1 else widths[i]
            convs.append(nn.Conv2d(c, out, 3, stride=2, padding=1))
            c = out
        self.convs = nn.ModuleList(convs)

    def forward(self, x):
        for i, conv in enumerate(self.convs):
            x = conv(x)
            if i < len(self.convs) - 1:
                x = F.leaky_relu(x, NEG_SLOPE)
        return x


class ConditionedDecoder(nn.Module):
    """U-shaped branch over the image with the flow code joined at the
    center; skip connections feed every contracting resolution (and the
    raw image at full resolution) into the expanding path."""

    def __init__(self, levels, base_width, code_channels, image_channels=3):
        super().__init__()
        widths = stage_widths(levels, base_width)
        self.levels = levels
        down = []
        c = image_channels
        for i in range(levels):
            down.append(nn.Conv2d(c, widths[i], 3, stride=2, padding=1))
            c = widths[i]
        self.down = nn.ModuleList(down)
        self.center = nn.Conv2d(widths[-1] + code_channels, widths[-1], 3, padding=1)
        up, fuse = [], []
        skip_ch = [image_channels] + widths[:-1]
        for i in reversed(range(levels)):
            out = widths[max(i - 1, 0)]
            up.append(nn.ConvTranspose2d(c, out, 4, stride=2, padding=1))
            fuse.append(nn.Conv2d(out + skip_ch[i], out, 3, padding=1))
            c = out
        self.up = nn.ModuleList(up)
        self.fuse = nn.ModuleList(fuse)
        self.head = nn.Conv2d(c, 2, 3, padding=1)

    def forward(self, image, code):
        skips = [image]
        x = image
        for conv in self.down:
            x = F.leaky_relu(conv(x), NEG_SLOPE)
            skips.append(x)
        if code.shape[-2:] != x.shape[-2:]:
            raise ShapeError(
                f"code spatial size {tuple(code.shape[-2:])} does not match "
                f"image at the bottleneck {tuple(x.shape[-2:])}"
            )
        x = F.leaky_relu(self.center(torch.cat([x, code], dim=1)), NEG_SLOPE)
        for k, (dec, mix) in enumerate(zip(self.up, self.fuse)):
            x = F.leaky_relu(dec(x), NEG_SLOPE)
            skip = skips[self.levels - 1 - k]
            x = F.leaky_relu(mix(torch.cat([x, skip], dim=1)), NEG_SLOPE)
        return self.head(x)


class ConditionalFlowPrior(nn.Module):
    def __init__(self, levels=4, base_width=4, code_channels=32, image_channels=3, seed=0):
        super().__init__()
        self.levels = levels
        self.base_width = base_width
        self.code_channels = code_channels
        self.image_channels = image_channels
        self.flow_scale = FLOW_SCALE
        self.encoder = FlowEncoder(levels, base_width, code_channels)
        self.decoder = ConditionedDecoder(levels, base_width, code_channels, image_channels)
        init_conv(self, torch.Generator().manual_seed(seed))

    @property
    def arch(self):
        return {
            "levels": self.levels,
            "base_width": self.base_width,
            "code_channels": self.code_channels,
            "image_channels": self.image_channels,
            "flow_scale": self.flow_scale,
        }

    @property
    def param_dtype(self):
        return next(self.parameters()).dtype

    def _check_divisible(self, h, w):
        d = 2**self.levels
        if h % d or w % d:
            raise ShapeError(f"spatial size {h}x{w} not divisible by 2^levels = {d}")

    def encode(self, flow):
        """Code of a flow field; a function of the flow alone."""
        x, squeeze = _to_bchw(flow, "flow", want_ch=2, dtype=self.param_dtype)
        self._check_divisible(*x.shape[-2:])
        code = self.encoder(x / self.flow_scale)
        return code[0] if squeeze else code

    def decode(self, image, code):
        """Flow reconstructed from an image and a code, in pixels."""
        x, squeeze = _to_bchw(image, "image", want_ch=self.image_channels, dtype=self.param_dtype)
        self._check_divisible(*x.shape[-2:])
        if code.ndim == 3:
            code = code[None]
        out = self.decoder(x, code) * self.flow_scale
        out = out.permute(0, 2, 3, 1)
        return out[0] if squeeze else out

    def reconstruct(self, flow, image):
        return self.decode(image, self.encode(flow))

    def log_prior(self, flow, image):
        """Differentiable prior score of a flow given an image.

        log_q is the negative per-pixel-per-channel mean squared
        reconstruction residual, in unscaled pixel units; one value per
        batch item.
        """
        flow_t = flow if torch.is_tensor(flow) else torch.as_tensor(flow)
        if not flow_t.is_floating_point():
            flow_t = flow_t.to(torch.get_default_dtype())
        recon = self.reconstruct(flow_t, image)
        residual = recon - flow_t
        dims = tuple(range(residual.ndim - 3, residual.ndim))
        return PriorScore(log_q=-(residual**2).mean(dims), residual=residual)


def save_prior(path, model, extra=None):
    save_checkpoint(path, "prior", model.arch, model.state_dict(), extra)


def load_prior(path):
    payload = load_checkpoint(path, expect_kind="prior")
    arch = dict(payload["arch"])
    flow_scale = arch.pop("flow_scale", FLOW_SCALE)
    model = ConditionalFlowPrior(**arch)
    model.flow_scale = flow_scale
    model.load_state_dict(payload["state"])
    model.eval()
    return model, payload["extra"]
