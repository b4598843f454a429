"""Image-pair to flow network.

Contracting/expanding convolutional architecture with skip connections,
fed the two frames concatenated on channels.  Flow is predicted at quarter
resolution and bilinearly upsampled to full resolution, then scaled by a
fixed factor so raw network outputs stay near unit range.
"""

import torch
import torch.nn.functional as F
from torch import nn

from ..checkpoint import load_checkpoint, save_checkpoint
from ..errors import ShapeError
from ..prior.model import FLOW_SCALE, NEG_SLOPE, init_conv, stage_widths

__all__ = ["FlowPredictor", "save_predictor", "load_predictor"]


class FlowPredictor(nn.Module):
    def __init__(self, levels=4, base_width=8, image_channels=3, output_stride=4, seed=0):
        super().__init__()
        if output_stride < 1 or output_stride > 2**levels or output_stride & (output_stride - 1):
            raise ValueError(f"output_stride must be a power of two <= 2^levels, got {output_stride}")
        self.levels = levels
        self.base_width = base_width
        self.image_channels = image_channels
        self.output_stride = output_stride
        self.flow_scale = FLOW_SCALE
        widths = stage_widths(levels, base_width)
        down = []
        c = 2 * image_channels
        for i in range(levels):
            down.append(nn.Conv2d(c, widths[i], 3, stride=2, padding=1))
            c = widths[i]
        self.down = nn.ModuleList(down)
        self.mid = nn.Conv2d(c, c, 3, padding=1)
        # expand back up to the output stride, fusing the skip at each level
        self.stop_level = output_stride.bit_length() - 1  # resolution /2^stop
        self.up_levels = list(reversed(range(self.stop_level, levels)))
        up, fuse = [], []
        for i in self.up_levels:
            # the deconv at index i lands on resolution /2^i, where the
            # contract feature skips[i-1] lives (none at full resolution)
            out = widths[max(i - 1, 0)]
            up.append(nn.ConvTranspose2d(c, out, 4, stride=2, padding=1))
            skip_ch = widths[i - 1] if i >= 1 else 0
            fuse.append(nn.Conv2d(out + skip_ch, out, 3, padding=1))
            c = out
        self.up = nn.ModuleList(up)
        self.fuse = nn.ModuleList(fuse)
        self.head = nn.Conv2d(c, 2, 3, padding=1)
        init_conv(self, torch.Generator().manual_seed(seed))
        # start near the zero-flow field: a full-gain head times the output
        # scale would launch warps out of frame and kill the photometric term
        with torch.no_grad():
            self.head.weight.mul_(0.01)

    @property
    def arch(self):
        return {
            "levels": self.levels,
            "base_width": self.base_width,
            "image_channels": self.image_channels,
            "output_stride": self.output_stride,
        }

    def _prep_pair(self, img1, img2):
        dtype = next(self.parameters()).dtype
        img1 = img1 if torch.is_tensor(img1) else torch.as_tensor(img1)
        img2 = img2 if torch.is_tensor(img2) else torch.as_tensor(img2)
        img1 = img1.to(dtype) if img1.dtype != dtype else img1
        img2 = img2.to(dtype) if img2.dtype != dtype else img2
        if img1.shape != img2.shape:
            raise ShapeError(f"image shapes differ: {tuple(img1.shape)} vs {tuple(img2.shape)}")
        squeeze = img1.ndim == 3
        if squeeze:
            img1, img2 = img1[None], img2[None]
        if img1.ndim != 4 or img1.shape[-1] != self.image_channels:
            raise ShapeError(
                f"expected (..., H, W, {self.image_channels}) images, got {tuple(img1.shape)}"
            )
        d = 2**self.levels
        if img1.shape[-3] % d or img1.shape[-2] % d:
            raise ShapeError(f"spatial size {img1.shape[-3]}x{img1.shape[-2]} not divisible by {d}")
        return img1, img2, squeeze

    def forward(self, img1, img2):
        """Flow from frame 1 to frame 2, channels-last, in pixels."""
        img1, img2, squeeze = self._prep_pair(img1, img2)
        x = torch.cat([img1, img2], dim=-1).permute(0, 3, 1, 2)
        skips = []
        for conv in self.down:
            x = F.leaky_relu(conv(x), NEG_SLOPE)
            skips.append(x)
        x = F.leaky_relu(self.mid(x), NEG_SLOPE)
        for i, dec, mix in zip(self.up_levels, self.up, self.fuse):
            x = F.leaky_relu(dec(x), NEG_SLOPE)
            if i >= 1:
                x = torch.cat([x, skips[i - 1]], dim=1)
            x = F.leaky_relu(mix(x), NEG_SLOPE)
        flow = self.head(x) * self.flow_scale
        if self.output_stride > 1:
            flow = F.interpolate(
                flow, scale_factor=self.output_stride, mode="bilinear", align_corners=False
            )
        flow = flow.permute(0, 2, 3, 1)
        return flow[0] if squeeze else flow

    def predict(self, img1, img2):
        """Inference entry point: no autograd, returns a detached field."""
        with torch.no_grad():
            return self.forward(img1, img2)


def save_predictor(path, model, extra=None):
    save_checkpoint(path, "predictor", model.arch, model.state_dict(), extra)


def load_predictor(path):
    payload = load_checkpoint(path, expect_kind="predictor")
    model = FlowPredictor(**payload["arch"])
    model.load_state_dict(payload["state"])
    model.eval()
    return model, payload["extra"]
