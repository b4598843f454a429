import math
import warnings

import numpy as np
import pytest
import torch

from flowlab.core import (
    EmptyCovisibleWarning,
    charbonnier,
    fb_occlusion,
    photometric_loss,
    warp,
)
from flowlab.errors import ShapeError


def bilinear_ref(image, x, y):
    """Scalar-at-a-time reference sampler with border clamping."""
    h, w = image.shape[:2]
    x = min(max(x, 0.0), w - 1.0)
    y = min(max(y, 0.0), h - 1.0)
    x0 = min(int(math.floor(x)), max(w - 2, 0))
    y0 = min(int(math.floor(y)), max(h - 2, 0))
    fx, fy = x - x0, y - y0
    return (
        image[y0, x0] * (1 - fx) * (1 - fy)
        + image[y0, min(x0 + 1, w - 1)] * fx * (1 - fy)
        + image[min(y0 + 1, h - 1), x0] * (1 - fx) * fy
        + image[min(y0 + 1, h - 1), min(x0 + 1, w - 1)] * fx * fy
    )


class TestCharbonnier:
    def test_zero_input_pins_to_eps_power(self):
        val = charbonnier(torch.tensor(0.0, dtype=torch.float64), eta=0.25, eps=1e-3)
        assert val.item() == pytest.approx((1e-6) ** 0.25, rel=1e-12)
        assert val.item() == pytest.approx(0.03162277660168379, rel=1e-10)
        # single precision input computes in single precision
        val32 = charbonnier(torch.tensor(0.0), eta=0.25, eps=1e-3)
        assert val32.dtype == torch.float32
        assert val32.item() == pytest.approx((1e-6) ** 0.25, rel=1e-6)

    def test_matches_formula_elementwise(self, rng):
        x = torch.tensor(rng.normal(size=(5, 7)))
        got = charbonnier(x, eta=0.4, eps=1e-3)
        want = (x**2 + 1e-6) ** 0.4
        assert torch.allclose(got, want, rtol=0, atol=0)

    def test_even_and_monotone_in_magnitude(self):
        x = torch.linspace(0.0, 3.0, 50, dtype=torch.float64)
        fwd = charbonnier(x, eta=0.25)
        assert torch.equal(fwd, charbonnier(-x, eta=0.25))
        assert (fwd[1:] > fwd[:-1]).all()

    def test_eta_must_be_positive(self):
        for eta in (0.0, -0.25):
            with pytest.raises(ValueError):
                charbonnier(torch.tensor(1.0), eta=eta)

    def test_gradient_finite_at_zero(self):
        x = torch.zeros(3, dtype=torch.float64, requires_grad=True)
        charbonnier(x, eta=0.25).sum().backward()
        assert torch.isfinite(x.grad).all()


class TestWarp:
    def test_zero_flow_is_identity(self, rng):
        img = torch.tensor(rng.uniform(size=(6, 8, 3)))
        warped, valid = warp(img, torch.zeros(6, 8, 2, dtype=img.dtype))
        assert torch.allclose(warped, img, rtol=0, atol=0)
        assert valid.min().item() == 1.0

    def test_integer_shift_relabels_pixels(self):
        img = torch.arange(5 * 7, dtype=torch.float64).reshape(5, 7, 1)
        flow = torch.zeros(5, 7, 2, dtype=torch.float64)
        flow[..., 0] = 2.0
        warped, valid = warp(img, flow)
        assert torch.equal(warped[:, :5, 0], img[:, 2:, 0])
        assert valid[:, :5].min().item() == 1.0
        assert valid[:, 5:].max().item() == 0.0

    def test_half_pixel_shift_on_ramp(self):
        img = torch.arange(5.0, dtype=torch.float64).reshape(1, 5, 1).repeat(3, 1, 1)
        flow = torch.zeros(3, 5, 2, dtype=torch.float64)
        flow[..., 0] = 0.5
        warped, _ = warp(img, flow)
        assert torch.allclose(
            warped[0, :4, 0], torch.tensor([0.5, 1.5, 2.5, 3.5], dtype=torch.float64)
        )

    def test_everything_out_of_frame(self):
        img = torch.rand(4, 4, 1, dtype=torch.float64)
        flow = torch.full((4, 4, 2), 10.0, dtype=torch.float64)
        _, valid = warp(img, flow)
        assert valid.max().item() == 0.0

    def test_matches_scalar_reference(self, rng):
        img_np = rng.uniform(size=(7, 9, 2))
        flow_np = rng.normal(scale=3.0, size=(7, 9, 2))
        warped, valid = warp(torch.tensor(img_np), torch.tensor(flow_np))
        for y in range(7):
            for x in range(9):
                tx = x + flow_np[y, x, 0]
                ty = y + flow_np[y, x, 1]
                want = bilinear_ref(img_np, tx, ty)
                assert warped[y, x].numpy() == pytest.approx(want, abs=1e-12)
                inside = 0 <= tx <= 8 and 0 <= ty <= 6
                assert valid[y, x].item() == (1.0 if inside else 0.0)

    def test_batched_matches_per_item(self, rng):
        imgs = torch.tensor(rng.uniform(size=(4, 6, 6, 3)))
        flows = torch.tensor(rng.normal(scale=2.0, size=(4, 6, 6, 2)))
        warped, valid = warp(imgs, flows)
        for i in range(4):
            wi, vi = warp(imgs[i], flows[i])
            assert torch.equal(warped[i], wi)
            assert torch.equal(valid[i], vi)

    def test_shape_mismatch_raises(self):
        with pytest.raises(ShapeError):
            warp(torch.zeros(4, 4, 3), torch.zeros(4, 5, 2))
        with pytest.raises(ShapeError):
            warp(torch.zeros(4, 4, 3), torch.zeros(4, 4, 3))

    def test_gradient_wrt_flow_matches_finite_differences(self, rng):
        img = torch.tensor(rng.uniform(size=(5, 5, 2)))
        flow = torch.tensor(rng.normal(scale=1.3, size=(5, 5, 2)), requires_grad=True)
        weights = torch.tensor(rng.normal(size=(5, 5, 2)))
        (warp(img, flow)[0] * weights).sum().backward()

        eps = 1e-6
        for _ in range(20):
            y, x, c = rng.integers(5), rng.integers(5), rng.integers(2)
            plus = flow.detach().clone()
            plus[y, x, c] += eps
            minus = flow.detach().clone()
            minus[y, x, c] -= eps
            fd = (
                (warp(img, plus)[0] * weights).sum()
                - (warp(img, minus)[0] * weights).sum()
            ).item() / (2 * eps)
            got = flow.grad[y, x, c].item()
            assert got == pytest.approx(fd, abs=1e-4)


class TestPhotometricLoss:
    def test_identical_frames_zero_flow(self):
        img = torch.rand(6, 6, 3, dtype=torch.float64)
        loss = photometric_loss(img, img, torch.zeros(6, 6, 2, dtype=torch.float64))
        assert loss.item() == pytest.approx(3 * (1e-6) ** 0.25, rel=1e-10)

    def test_matches_loop_reference(self, rng):
        h, w, c = 6, 7, 3
        i1 = rng.uniform(size=(h, w, c))
        i2 = rng.uniform(size=(h, w, c))
        fl = rng.normal(scale=2.0, size=(h, w, 2))
        occ = (rng.uniform(size=(h, w)) < 0.3).astype(np.float64)

        num, den = 0.0, 0.0
        for y in range(h):
            for x in range(w):
                tx, ty = x + fl[y, x, 0], y + fl[y, x, 1]
                if not (0 <= tx <= w - 1 and 0 <= ty <= h - 1):
                    continue
                weight = 1.0 - occ[y, x]
                samp = bilinear_ref(i2, tx, ty)
                rho = sum(
                    (float(d) ** 2 + 1e-6) ** 0.25 for d in (i1[y, x] - samp)
                )
                num += weight * rho
                den += weight
        want = num / den

        got = photometric_loss(
            torch.tensor(i1), torch.tensor(i2), torch.tensor(fl), torch.tensor(occ)
        )
        assert got.item() == pytest.approx(want, rel=1e-12)

    def test_fully_occluded_warns_and_returns_zero(self):
        img = torch.rand(4, 4, 3)
        with pytest.warns(EmptyCovisibleWarning):
            loss = photometric_loss(
                img, img, torch.zeros(4, 4, 2), occlusion=torch.ones(4, 4)
            )
        assert loss.item() == 0.0

    def test_all_out_of_frame_warns(self):
        img = torch.rand(4, 4, 3)
        with pytest.warns(EmptyCovisibleWarning):
            loss = photometric_loss(img, img, torch.full((4, 4, 2), 99.0))
        assert loss.item() == 0.0

    def test_soft_occlusion_weights_interpolate(self, rng):
        i1 = torch.tensor(rng.uniform(size=(5, 5, 1)))
        i2 = torch.tensor(rng.uniform(size=(5, 5, 1)))
        fl = torch.zeros(5, 5, 2, dtype=torch.float64)
        occ = torch.tensor(rng.uniform(size=(5, 5)))
        rho = ((i1 - i2).squeeze(-1) ** 2 + 1e-6) ** 0.25
        want = (rho * (1 - occ)).sum() / (1 - occ).sum()
        got = photometric_loss(i1, i2, fl, occ)
        assert got.item() == pytest.approx(want.item(), rel=1e-12)

    def test_gradient_wrt_flow_matches_finite_differences(self, rng):
        i1 = torch.tensor(rng.uniform(size=(6, 6, 2)))
        i2 = torch.tensor(rng.uniform(size=(6, 6, 2)))
        fl = torch.tensor(rng.normal(scale=0.8, size=(6, 6, 2)), requires_grad=True)
        photometric_loss(i1, i2, fl).backward()

        eps = 1e-6
        for _ in range(15):
            y, x, c = rng.integers(6), rng.integers(6), rng.integers(2)
            plus = fl.detach().clone()
            plus[y, x, c] += eps
            minus = fl.detach().clone()
            minus[y, x, c] -= eps
            fd = (
                photometric_loss(i1, i2, plus) - photometric_loss(i1, i2, minus)
            ).item() / (2 * eps)
            assert fl.grad[y, x, c].item() == pytest.approx(fd, abs=1e-4)

    def test_numpy_inputs_accepted(self, rng):
        i1 = rng.uniform(size=(4, 4, 3))
        loss = photometric_loss(i1, i1, np.zeros((4, 4, 2)))
        assert torch.is_tensor(loss)
        assert math.isfinite(loss.item())


class TestFbOcclusion:
    def test_consistent_flows_not_flagged(self):
        fw = torch.full((6, 6, 2), 1.5, dtype=torch.float64)
        fw[..., 1] = 0.0
        bw = -fw
        occ = fb_occlusion(fw, bw)
        # interior pixels compose to exactly zero; the right edge leaves frame
        assert occ[:, :4].max().item() == 0.0
        assert occ[:, 5].min().item() == 1.0

    def test_inconsistent_flows_flagged(self):
        fw = torch.zeros(5, 5, 2, dtype=torch.float64)
        fw[..., 0] = 2.0
        bw = torch.zeros(5, 5, 2, dtype=torch.float64)  # does not cancel
        occ = fb_occlusion(fw, bw)
        # |fw + bw|^2 = 4 > 0.01 * 4 + 0.5 everywhere the sample is in frame
        assert occ.min().item() == 1.0

    def test_matches_loop_reference(self, rng):
        h = w = 7
        fw = rng.normal(scale=2.0, size=(h, w, 2))
        bw = rng.normal(scale=2.0, size=(h, w, 2))
        got = fb_occlusion(torch.tensor(fw), torch.tensor(bw), c1=0.01, c2=0.5)
        for y in range(h):
            for x in range(w):
                tx, ty = x + fw[y, x, 0], y + fw[y, x, 1]
                if not (0 <= tx <= w - 1 and 0 <= ty <= h - 1):
                    want = 1.0
                else:
                    b = np.array(
                        [bilinear_ref(bw[..., 0], tx, ty), bilinear_ref(bw[..., 1], tx, ty)]
                    )
                    diff = float(((fw[y, x] + b) ** 2).sum())
                    bound = 0.01 * float((fw[y, x] ** 2).sum() + (b**2).sum()) + 0.5
                    want = 1.0 if diff > bound else 0.0
                assert got[y, x].item() == want

    def test_threshold_constants_take_effect(self):
        fw = torch.zeros(3, 3, 2, dtype=torch.float64)
        fw[..., 0] = 1.0
        bw = torch.zeros(3, 3, 2, dtype=torch.float64)
        # residual 1.0: inside default bound (c2=0.5 fails) -> need tighter c2
        occ_loose = fb_occlusion(fw, bw, c1=0.0, c2=1.5)
        occ_tight = fb_occlusion(fw, bw, c1=0.0, c2=0.5)
        inside = torch.zeros(3, 3, dtype=torch.bool)
        inside[:, :2] = True
        assert occ_loose[inside].max().item() == 0.0
        assert occ_tight[inside].min().item() == 1.0


def test_empty_covisible_warning_is_a_warning():
    assert issubclass(EmptyCovisibleWarning, Warning)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        with pytest.raises(EmptyCovisibleWarning):
            photometric_loss(
                torch.rand(3, 3, 1),
                torch.rand(3, 3, 1),
                torch.zeros(3, 3, 2),
                occlusion=torch.ones(3, 3),
            )
