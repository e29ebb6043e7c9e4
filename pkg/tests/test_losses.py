import numpy as np
import pytest
import torch

from interflow import losses
from interflow.errors import DimensionError

from conftest import to_nchw
from oracles import gauss_pyramid_oracle


class TestLaplacianPyramid:
    def test_constant_image_bands_vanish(self):
        img = torch.full((1, 3, 32, 32), 0.4, dtype=torch.float64)
        pyr = losses.laplacian_pyramid(img, 5)
        for band in pyr[:-1]:
            assert band.abs().max() < 1e-12
        assert torch.allclose(pyr[-1], torch.full_like(pyr[-1], 0.4))

    def test_perfect_reconstruction(self, rng):
        img = torch.from_numpy(rng.random((2, 3, 48, 40)))
        pyr = losses.laplacian_pyramid(img, 5)
        rec = losses.laplacian_reconstruct(pyr)
        assert (rec - img).abs().max() < 1e-6

    def test_level_sizes_224(self):
        img = torch.rand(1, 1, 224, 224)
        pyr = losses.laplacian_pyramid(img, 5)
        sizes = [tuple(b.shape[2:]) for b in pyr]
        assert sizes == [(224, 224), (112, 112), (56, 56), (28, 28), (14, 14)]

    def test_matches_bruteforce_oracle(self, rng):
        img = rng.random((16, 16, 2))
        pyr = losses.laplacian_pyramid(to_nchw(img), 3)
        want = gauss_pyramid_oracle(img, 3)
        for got, ref in zip(pyr, want):
            np.testing.assert_allclose(
                got.squeeze(0).permute(1, 2, 0).numpy(), ref, atol=1e-6)

    def test_too_small_image(self):
        with pytest.raises(DimensionError):
            losses.laplacian_pyramid(torch.rand(1, 1, 8, 8), 5)


class TestLapLoss:
    def test_identity_is_zero(self, rng):
        a = torch.from_numpy(rng.random((1, 3, 32, 32)))
        assert float(losses.lap_loss(a, a.clone())) == 0.0

    def test_symmetry(self, rng):
        a = torch.from_numpy(rng.random((1, 3, 32, 32)))
        b = torch.from_numpy(rng.random((1, 3, 32, 32)))
        assert float(losses.lap_loss(a, b)) == pytest.approx(float(losses.lap_loss(b, a)), rel=1e-12)

    def test_constant_images_closed_form(self):
        # bands of constants vanish; only the low-pass top differs, weighted 2^4
        c = 0.3
        a = torch.zeros(1, 3, 32, 32, dtype=torch.float64)
        b = torch.full((1, 3, 32, 32), c, dtype=torch.float64)
        want = (2 ** 4) * c
        assert float(losses.lap_loss(a, b, 5)) == pytest.approx(want, rel=1e-10)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            losses.lap_loss(torch.rand(1, 3, 32, 32), torch.rand(1, 3, 16, 16))


class TestDistillationLoss:
    def test_equal_flows_give_exact_zero(self, rng):
        tea = torch.from_numpy(rng.standard_normal((2, 4, 8, 8)).astype(np.float32))
        hist = [tea.clone(), tea.clone(), tea.clone()]
        assert float(losses.distillation_loss(hist, tea)) == 0.0

    def test_single_pixel_analytic_value(self):
        # one pixel off by (3, 4) in one direction of one of 3 entries,
        # 10x10 image: (5 / 100) / 3
        tea = torch.zeros(1, 4, 10, 10)
        hist = [torch.zeros(1, 4, 10, 10) for _ in range(3)]
        hist[1][0, 0, 4, 7] = 3.0
        hist[1][0, 1, 4, 7] = 4.0
        got = float(losses.distillation_loss(hist, tea))
        assert got == pytest.approx((5.0 / 100.0) / 3.0, abs=1e-6)

    def test_no_gradient_to_teacher(self):
        tea = torch.randn(1, 4, 8, 8, requires_grad=True)
        hist = [torch.randn(1, 4, 8, 8, requires_grad=True) for _ in range(2)]
        loss = losses.distillation_loss(hist, tea)
        grads = torch.autograd.grad(loss, [tea] + hist, allow_unused=True)
        assert grads[0] is None or grads[0].abs().max() == 0.0
        assert all(g is not None and g.abs().max() > 0 for g in grads[1:])

    def test_gradient_finite_at_equality(self):
        tea = torch.zeros(1, 4, 4, 4)
        student = torch.zeros(1, 4, 4, 4, requires_grad=True)
        loss = losses.distillation_loss([student], tea)
        loss.backward()
        assert torch.isfinite(student.grad).all()

    def test_resolution_mismatch(self):
        with pytest.raises(DimensionError):
            losses.distillation_loss([torch.zeros(1, 4, 8, 8)], torch.zeros(1, 4, 4, 4))


class TestTotalLoss:
    def _inputs(self, rng, b=1, s=32):
        g = torch.from_numpy(rng.random((b, 3, s, s)).astype(np.float32))
        flows = [torch.from_numpy(rng.standard_normal((b, 4, s, s)).astype(np.float32))
                 for _ in range(3)]
        tea = torch.from_numpy(rng.standard_normal((b, 4, s, s)).astype(np.float32))
        return g, flows, tea

    def test_perfect_everything_is_zero(self, rng):
        gt, _, tea = self._inputs(rng)
        report = losses.total_loss(gt.clone(), gt.clone(), gt, [tea.clone()], tea)
        assert float(report.l_total) == 0.0

    def test_lambda_zero_drops_distillation(self, rng):
        gt, flows, tea = self._inputs(rng)
        s = torch.rand_like(gt)
        t = torch.rand_like(gt)
        rep = losses.total_loss(s, t, gt, flows, tea, lambda_d=0.0)
        assert float(rep.l_total) == pytest.approx(
            float(rep.l_rec) + float(rep.l_rec_tea), rel=1e-6)

    def test_default_weight_is_0_01(self, rng):
        assert losses.DISTILL_WEIGHT == 0.01
        gt, flows, tea = self._inputs(rng)
        rep = losses.total_loss(torch.rand_like(gt), torch.rand_like(gt), gt, flows, tea)
        assert rep.lambda_d == 0.01
        assert float(rep.l_total) == pytest.approx(
            float(rep.l_rec) + float(rep.l_rec_tea) + 0.01 * float(rep.l_dis), rel=1e-5)

    def test_matches_separate_lap_losses(self, rng):
        gt, flows, tea = self._inputs(rng)
        s = torch.rand_like(gt)
        t = torch.rand_like(gt)
        rep = losses.total_loss(s, t, gt, flows, tea)
        assert float(rep.l_rec) == pytest.approx(float(losses.lap_loss(s, gt)), rel=1e-5)
        assert float(rep.l_rec_tea) == pytest.approx(float(losses.lap_loss(t, gt)), rel=1e-5)

    def test_l1_variant(self, rng):
        gt, flows, tea = self._inputs(rng)
        s = torch.rand_like(gt)
        rep = losses.total_loss(s, gt.clone(), gt, flows, tea, rec_loss="l1")
        assert float(rep.l_rec) == pytest.approx(float((s - gt).abs().mean()), rel=1e-6)
        assert float(rep.l_rec_tea) == 0.0

    def test_all_terms_nonnegative(self, rng):
        gt, flows, tea = self._inputs(rng)
        rep = losses.total_loss(torch.rand_like(gt), torch.rand_like(gt), gt, flows, tea)
        for v in (rep.l_rec, rep.l_rec_tea, rep.l_dis, rep.l_total):
            assert float(v) >= 0.0


def test_student_gradient_matches_finite_differences(rng):
    """End-to-end loss gradient on a tiny setup against central differences."""
    torch.manual_seed(0)
    gt = torch.rand(1, 3, 8, 8, dtype=torch.float64)
    w = torch.randn(3, 3, 3, 3, dtype=torch.float64) * 0.3

    def network(weight):
        s = torch.nn.functional.conv2d(gt, weight, padding=1).sigmoid()
        return losses.lap_loss(s, gt, levels=2)

    w.requires_grad_(True)
    loss = network(w)
    (analytic,) = torch.autograd.grad(loss, w)
    eps = 1e-5
    flat = w.detach().reshape(-1)
    worst = 0.0
    with torch.no_grad():
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + eps
            hi = float(network(w.detach()))
            flat[i] = orig - eps
            lo = float(network(w.detach()))
            flat[i] = orig
            num = (hi - lo) / (2 * eps)
            a = analytic.reshape(-1)[i].item()
            worst = max(worst, abs(a - num) / max(abs(a), abs(num), 1e-3))
    assert worst <= 1e-3
