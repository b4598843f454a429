"""Differentiable flow and image primitives.

Conventions: images are ``(..., H, W, C)`` tensors with intensities in
``[0, 1]``, flows are ``(..., H, W, 2)`` pixel displacements with channel 0
the horizontal component u and channel 1 the vertical component v, and
occlusion masks are ``(..., H, W)`` with 1 meaning "excluded from the data
term".  Pixel centers sit at integer coordinates with the origin at the
top-left corner.  All functions accept numpy arrays or torch tensors and
compute in torch, so every operation stated as differentiable supports
autograd in the dtype of its inputs (use float64 inputs for gradient
checking).
"""

import warnings

import torch

from ..errors import ShapeError

__all__ = [
    "charbonnier",
    "warp",
    "photometric_loss",
    "fb_occlusion",
    "EmptyCovisibleWarning",
]


class EmptyCovisibleWarning(RuntimeWarning):
    """Raised (as a warning) when a data-term domain contains no pixels."""


def _tensor(x):
    return x if torch.is_tensor(x) else torch.as_tensor(x)


def charbonnier(x, eta, eps=1e-3):
    """Generalized robust penalty ``(x^2 + eps^2)^eta``, elementwise.

    Smooth everywhere and even in ``x``; ``eta=0.5`` approximates ``|x|``
    and smaller exponents are increasingly outlier-tolerant.
    """
    if not eta > 0:
        raise ValueError(f"charbonnier exponent must be positive, got {eta}")
    x = _tensor(x)
    return (x * x + eps * eps) ** eta


def warp(image, flow):
    """Backward-warp ``image`` by ``flow`` with bilinear sampling.

    Returns ``(warped, validity)`` where ``warped(x) = image(x + flow(x))``
    and ``validity(x)`` is 1 exactly when the sample point lands inside the
    image rectangle.  Out-of-frame sample points are clamped to the border
    (zero gradient through the clamp), so the warped values there are
    well-defined but should be discarded via the validity mask.
    Differentiable with respect to both inputs.
    """
    image = _tensor(image)
    flow = _tensor(flow)
    if image.ndim < 3 or flow.ndim < 3 or flow.shape[-1] != 2:
        raise ShapeError(
            f"warp expects (..., H, W, C) image and (..., H, W, 2) flow, "
            f"got {tuple(image.shape)} and {tuple(flow.shape)}"
        )
    if image.shape[-3:-1] != flow.shape[-3:-1] or image.shape[:-3] != flow.shape[:-3]:
        raise ShapeError(
            f"warp shape mismatch: image {tuple(image.shape)} vs flow {tuple(flow.shape)}"
        )

    lead = image.shape[:-3]
    h, w, c = image.shape[-3:]
    img = image.reshape(-1, h, w, c)
    flo = flow.reshape(-1, h, w, 2)
    b = img.shape[0]

    dtype = flo.dtype if flo.is_floating_point() else torch.get_default_dtype()
    ys, xs = torch.meshgrid(
        torch.arange(h, dtype=dtype), torch.arange(w, dtype=dtype), indexing="ij"
    )
    tx = xs + flo[..., 0]
    ty = ys + flo[..., 1]
    valid = ((tx >= 0) & (tx <= w - 1) & (ty >= 0) & (ty <= h - 1)).to(dtype)

    cx = tx.clamp(0, w - 1)
    cy = ty.clamp(0, h - 1)
    # keep the floor corner one pixel off the far edge so the +1 neighbour
    # stays in frame; at the edge the weight saturates to select the border
    x0 = cx.floor().clamp(0, max(w - 2, 0))
    y0 = cy.floor().clamp(0, max(h - 2, 0))
    wx = (cx - x0).unsqueeze(-1)
    wy = (cy - y0).unsqueeze(-1)
    # non-finite flow must surface as NaN output, not as a wild gather index
    x0 = torch.nan_to_num(x0).long()
    y0 = torch.nan_to_num(y0).long()

    flat = img.reshape(b, h * w, c)

    def take(yy, xx):
        idx = (yy.clamp(max=h - 1) * w + xx.clamp(max=w - 1)).reshape(b, h * w, 1)
        return flat.gather(1, idx.expand(-1, -1, c)).reshape(b, h, w, c)

    v00 = take(y0, x0)
    v01 = take(y0, x0 + 1)
    v10 = take(y0 + 1, x0)
    v11 = take(y0 + 1, x0 + 1)
    out = (
        v00 * (1 - wx) * (1 - wy)
        + v01 * wx * (1 - wy)
        + v10 * (1 - wx) * wy
        + v11 * wx * wy
    )
    return out.reshape(*lead, h, w, c), valid.reshape(*lead, h, w)


def photometric_loss(img1, img2, flow, occlusion=None, eta=0.25, eps=1e-3):
    """Robust warping error over the co-visible region.

    Per pixel the channel-summed penalty ``charbonnier(img1 - img2 warped by
    flow)`` is averaged over pixels that are both un-occluded and warp to a
    point inside the frame; the mean keeps the magnitude independent of
    resolution.  ``occlusion`` may be a soft ``[0, 1]`` mask, in which
    case the average is weighted by ``1 - occlusion`` and gradients flow
    through the weights.  An empty co-visible set returns 0 and emits
    :class:`EmptyCovisibleWarning`.
    """
    img1 = _tensor(img1)
    warped, valid = warp(img2, flow)
    if img1.shape != warped.shape:
        raise ShapeError(
            f"photometric_loss image shape mismatch: {tuple(img1.shape)} vs "
            f"{tuple(warped.shape)}"
        )
    rho = charbonnier(img1 - warped, eta, eps).sum(-1)
    weight = valid
    if occlusion is not None:
        occlusion = _tensor(occlusion).to(valid.dtype)
        if occlusion.shape != valid.shape:
            raise ShapeError(
                f"occlusion shape {tuple(occlusion.shape)} does not match "
                f"image grid {tuple(valid.shape)}"
            )
        weight = weight * (1 - occlusion)
    total = weight.sum()
    if total.item() == 0:
        warnings.warn(
            "photometric_loss: co-visible set is empty, returning 0",
            EmptyCovisibleWarning,
            stacklevel=2,
        )
        return (rho * weight).sum() * 0.0
    return (rho * weight).sum() / total


def fb_occlusion(flow_fw, flow_bw, c1=0.01, c2=0.5):
    """Occlusion mask from forward-backward flow consistency.

    A pixel is flagged when the composed forward and bilinearly-resampled
    backward flow fail to cancel, i.e. when ``|f_fw + f_bw(x + f_fw)|^2``
    exceeds ``c1 * (|f_fw|^2 + |f_bw(x + f_fw)|^2) + c2``, or when the
    forward flow leaves the frame.  Returns a float ``{0, 1}`` mask.
    """
    flow_fw = _tensor(flow_fw)
    bw_at_target, valid = warp(flow_bw, flow_fw)
    diff = (flow_fw + bw_at_target).pow(2).sum(-1)
    bound = c1 * (flow_fw.pow(2).sum(-1) + bw_at_target.pow(2).sum(-1)) + c2
    occ = (diff > bound) | (valid == 0)
    return occ.to(flow_fw.dtype)
