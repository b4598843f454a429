"""Flow accuracy metrics.

All metrics are computed in float64 regardless of input dtype, over the
pixels where ``mask == 0`` when an exclusion mask is given.
"""

import numpy as np

from ..errors import EmptyDomainError, ShapeError

__all__ = ["epe", "error_rate"]


def _check(flow_est, flow_gt, mask):
    flow_est = np.asarray(flow_est, dtype=np.float64)
    flow_gt = np.asarray(flow_gt, dtype=np.float64)
    if flow_est.shape != flow_gt.shape or flow_est.shape[-1] != 2:
        raise ShapeError(
            f"flow shape mismatch: {flow_est.shape} vs {flow_gt.shape}"
        )
    keep = np.ones(flow_est.shape[:-1], dtype=bool)
    if mask is not None:
        mask = np.asarray(mask)
        if mask.shape != keep.shape:
            raise ShapeError(
                f"mask shape {mask.shape} does not match flow grid {keep.shape}"
            )
        keep = mask == 0
    if not keep.any():
        raise EmptyDomainError("metric domain is empty after masking")
    return flow_est, flow_gt, keep


def epe(flow_est, flow_gt, mask=None):
    """Mean endpoint error: average L2 norm of ``flow_est - flow_gt``."""
    flow_est, flow_gt, keep = _check(flow_est, flow_gt, mask)
    dist = np.sqrt(((flow_est - flow_gt) ** 2).sum(-1))
    return float(dist[keep].mean())


def error_rate(flow_est, flow_gt, mask=None, abs_thresh=3.0, rel_thresh=0.05):
    """Fraction of pixels whose endpoint error is large both ways.

    A pixel counts as erroneous when its endpoint error exceeds
    ``abs_thresh`` pixels and also ``rel_thresh`` times the ground-truth
    magnitude, so large but proportionally small errors on fast motion do
    not count.
    """
    flow_est, flow_gt, keep = _check(flow_est, flow_gt, mask)
    dist = np.sqrt(((flow_est - flow_gt) ** 2).sum(-1))
    mag = np.sqrt((flow_gt**2).sum(-1))
    bad = (dist > abs_thresh) & (dist > rel_thresh * mag)
    return float(bad[keep].mean())
