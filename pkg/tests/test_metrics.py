import numpy as np
import pytest

from interflow import metrics, viz
from interflow.errors import DimensionError

from oracles import ie_oracle


class TestPsnr:
    def test_identical_images_capped(self, rng):
        a = rng.random((16, 16, 3))
        assert metrics.psnr(a, a.copy()) == 99.0

    def test_constant_offset_0_1(self):
        a = np.full((8, 8, 3), 0.4)
        b = a + 0.1
        assert metrics.psnr(a, b) == pytest.approx(20.0, abs=1e-9)

    def test_constant_offset_0_01(self):
        a = np.full((8, 8, 3), 0.4)
        b = a + 0.01
        assert metrics.psnr(a, b) == pytest.approx(40.0, abs=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            metrics.psnr(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))


class TestSsim:
    def test_self_similarity_is_one(self, rng):
        a = rng.random((24, 24, 3))
        assert metrics.ssim(a, a.copy()) == pytest.approx(1.0, abs=1e-12)

    def test_symmetry(self, rng):
        a = rng.random((24, 24))
        b = rng.random((24, 24))
        assert metrics.ssim(a, b) == pytest.approx(metrics.ssim(b, a), rel=1e-12)

    def test_constant_pair_against_reference(self):
        skimage = pytest.importorskip("skimage.metrics")
        a = np.full((32, 32), 0.4)
        b = np.full((32, 32), 0.5)
        want = skimage.structural_similarity(
            a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=True,
            data_range=1.0)
        assert metrics.ssim(a, b) == pytest.approx(want, abs=1e-7)

    def test_random_pairs_against_reference(self, rng):
        skimage = pytest.importorskip("skimage.metrics")
        for _ in range(10):
            a = rng.random((20, 26))
            b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
            want = skimage.structural_similarity(
                a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=True,
                data_range=1.0)
            assert metrics.ssim(a, b) == pytest.approx(want, abs=1e-6)

    def test_window_larger_than_image(self):
        with pytest.raises(DimensionError):
            metrics.ssim(np.zeros((8, 8)), np.zeros((8, 8)))


class TestInterpolationError:
    def test_identity_zero(self, rng):
        a = rng.random((10, 10, 3))
        assert metrics.interpolation_error(a, a.copy()) == 0.0

    def test_constant_offset_two_levels(self):
        a = np.full((8, 8, 3), 0.4)
        b = a + 2.0 / 255.0
        assert metrics.interpolation_error(a, b) == pytest.approx(2.0, abs=1e-9)

    def test_matches_rms_oracle(self, rng):
        for _ in range(10):
            a = rng.random((12, 9, 3))
            b = rng.random((12, 9, 3))
            assert metrics.interpolation_error(a, b) == pytest.approx(
                ie_oracle(a, b), abs=1e-6)


class TestScorePairs:
    def test_aggregates_mean(self, rng):
        preds = [rng.random((16, 16, 3)) for _ in range(3)]
        gts = [np.clip(p + 0.05, 0, 1) for p in preds]
        rep = metrics.score_pairs(preds, gts, with_ssim=False)
        assert rep.psnr == pytest.approx(np.mean([r["psnr"] for r in rep.per_frame]))
        assert len(rep.per_frame) == 3


class TestFlowColor:
    def test_zero_flow_is_white(self):
        img = viz.flow_to_color(np.zeros((8, 8, 2)))
        np.testing.assert_allclose(img, np.ones_like(img))

    def test_opposite_flows_get_complementary_hues(self):
        f = np.zeros((2, 2, 2))
        f[0, :, 0] = 3.0
        f[1, :, 0] = -3.0
        img = viz.flow_to_color(f)
        # complementary full-saturation colors sum to white
        np.testing.assert_allclose(img[0] + img[1], np.ones_like(img[0]), atol=1e-6)

    def test_magnitude_scaling_keeps_hue(self):
        f = np.zeros((1, 2, 2))
        f[0, :, 0] = 2.0
        a = viz.flow_to_color(f)
        b = viz.flow_to_color(f * 10)
        np.testing.assert_allclose(a, b, atol=1e-7)

    def test_shape_and_range(self, rng):
        img = viz.flow_to_color(rng.standard_normal((6, 7, 2)))
        assert img.shape == (6, 7, 3)
        assert img.min() >= 0.0 and img.max() <= 1.0
