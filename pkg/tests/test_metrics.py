import math

import numpy as np
import pytest

from flowlab.core import epe, error_rate
from flowlab.errors import EmptyDomainError, ShapeError


def test_epe_pythagorean_example():
    est = np.zeros((2, 2, 2))
    gt = np.zeros((2, 2, 2))
    est[0, 0] = (3.0, 4.0)
    # one pixel at distance 5, three at 0
    assert epe(est, gt) == pytest.approx(1.25, abs=0)


def test_epe_matches_loop_reference():
    rng = np.random.default_rng(7)
    est = rng.normal(size=(9, 11, 2))
    gt = rng.normal(size=(9, 11, 2))
    total = 0.0
    for y in range(9):
        for x in range(11):
            du = est[y, x, 0] - gt[y, x, 0]
            dv = est[y, x, 1] - gt[y, x, 1]
            total += math.sqrt(du * du + dv * dv)
    assert epe(est, gt) == pytest.approx(total / 99, rel=1e-13)


def test_epe_mask_excludes_nonzero_entries():
    rng = np.random.default_rng(8)
    est = rng.normal(size=(6, 6, 2))
    gt = rng.normal(size=(6, 6, 2))
    mask = (rng.uniform(size=(6, 6)) < 0.4).astype(np.uint8)
    total, n = 0.0, 0
    for y in range(6):
        for x in range(6):
            if mask[y, x] != 0:
                continue
            d = est[y, x] - gt[y, x]
            total += math.sqrt(float(d @ d))
            n += 1
    assert epe(est, gt, mask) == pytest.approx(total / n, rel=1e-13)


def test_epe_perfect_is_zero():
    gt = np.random.default_rng(0).normal(size=(4, 4, 2))
    assert epe(gt, gt) == 0.0


def test_error_rate_threshold_semantics():
    gt = np.zeros((1, 4, 2))
    gt[0, :, 0] = [0.0, 0.0, 100.0, 100.0]
    est = gt.copy()
    est[0, 0, 0] += 2.0  # below abs threshold: fine
    est[0, 1, 0] += 4.0  # above both: bad
    est[0, 2, 0] += 4.0  # above abs, below 5% of 100: fine
    est[0, 3, 0] += 6.0  # above abs and above 5 = 0.05 * 100: bad
    assert error_rate(est, gt) == pytest.approx(0.5, abs=0)


def test_error_rate_matches_loop_reference():
    rng = np.random.default_rng(9)
    est = rng.normal(scale=4.0, size=(8, 8, 2))
    gt = rng.normal(scale=4.0, size=(8, 8, 2))
    mask = (rng.uniform(size=(8, 8)) < 0.25).astype(np.int64)
    bad, n = 0, 0
    for y in range(8):
        for x in range(8):
            if mask[y, x] != 0:
                continue
            d = est[y, x] - gt[y, x]
            dist = math.sqrt(float(d @ d))
            mag = math.sqrt(float(gt[y, x] @ gt[y, x]))
            if dist > 3.0 and dist > 0.05 * mag:
                bad += 1
            n += 1
    assert error_rate(est, gt, mask) == pytest.approx(bad / n, rel=1e-13)


def test_error_rate_custom_thresholds():
    gt = np.zeros((1, 1, 2))
    est = np.array([[[1.0, 0.0]]])
    assert error_rate(est, gt, abs_thresh=0.5, rel_thresh=0.0) == 1.0
    assert error_rate(est, gt, abs_thresh=1.5, rel_thresh=0.0) == 0.0


def test_float64_accumulation():
    # float32 accumulation of many identical values drifts; float64 must not
    est = np.full((500, 500, 2), 0.1, dtype=np.float32)
    gt = np.zeros((500, 500, 2), dtype=np.float32)
    want = math.sqrt(2 * float(np.float32(0.1)) ** 2)
    assert epe(est, gt) == pytest.approx(want, rel=1e-9)


def test_empty_domain_raises():
    flow = np.zeros((3, 3, 2))
    with pytest.raises(EmptyDomainError):
        epe(flow, flow, mask=np.ones((3, 3)))
    with pytest.raises(EmptyDomainError):
        error_rate(flow, flow, mask=np.ones((3, 3)))


def test_shape_mismatch_raises():
    with pytest.raises(ShapeError):
        epe(np.zeros((3, 3, 2)), np.zeros((3, 4, 2)))
    with pytest.raises(ShapeError):
        epe(np.zeros((3, 3, 3)), np.zeros((3, 3, 3)))
    with pytest.raises(ShapeError):
        epe(np.zeros((3, 3, 2)), np.zeros((3, 3, 2)), mask=np.zeros((2, 2)))
