import math

import numpy as np
import pytest

from macesr.linops import bicubic_upsample, block_average
from macesr.metrics import FrcCurve, SpeedupInput, frc, psnr, speedup


def bandlimited_pattern(n, seed, floor=0.12, power=2.25, cutoff=0.242):
    """Noise with power rising toward a hard band cutoff, in [0, 1]."""
    rng = np.random.default_rng(seed)
    spec = np.fft.fft2(rng.standard_normal((n, n)))
    bins = np.fft.fftfreq(n)
    radius = np.hypot(bins[:, None], bins[None, :])
    shape = np.where(
        (radius > 0) & (radius <= cutoff), np.maximum(radius, floor) ** power, 0.0
    )
    img = np.fft.ifft2(spec * shape).real
    return (img - img.min()) / (img.max() - img.min())


class TestPsnr:
    def test_identical_images_infinite(self):
        x = np.random.default_rng(0).random((8, 8))
        assert psnr(x, x) == math.inf

    def test_constant_offset_exact_value(self):
        ref = np.random.default_rng(1).random((16, 16)) * 0.5
        assert psnr(ref, ref + 0.1) == pytest.approx(20.0, abs=1e-12)

    def test_matches_two_pass_computation(self):
        rng = np.random.default_rng(2)
        a, b = rng.random((12, 12)), rng.random((12, 12))
        direct = 10.0 * math.log10(1.0 / np.mean((a - b) ** 2))
        assert psnr(a, b) == pytest.approx(direct, abs=1e-10)

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        a, b = rng.random((8, 8)), rng.random((8, 8))
        assert psnr(a, b) == pytest.approx(psnr(b, a), abs=0)

    def test_peak_scaling(self):
        rng = np.random.default_rng(4)
        a, b = rng.random((8, 8)), rng.random((8, 8))
        assert psnr(a * 255, b * 255, peak=255.0) == pytest.approx(
            psnr(a, b), abs=1e-9
        )

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((4, 4)), np.zeros((5, 5)))

    def test_bad_peak(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((4, 4)), np.zeros((4, 4)), peak=0.0)


class TestFrc:
    def test_self_correlation_is_one(self):
        x = np.random.default_rng(5).random((32, 32))
        curve = frc(x, x)
        np.testing.assert_allclose(curve.correlations, 1.0, atol=1e-9)

    def test_symmetric_in_arguments(self):
        rng = np.random.default_rng(6)
        a, b = rng.random((16, 16)), rng.random((16, 16))
        ab, ba = frc(a, b), frc(b, a)
        np.testing.assert_allclose(ab.correlations, ba.correlations, atol=1e-12)

    def test_frequencies_strictly_increasing_and_bounded(self):
        x = np.random.default_rng(7).random((16, 16))
        curve = frc(x, x)
        assert np.all(np.diff(curve.ring_frequencies) > 0)
        assert curve.ring_frequencies[0] > 0  # DC excluded
        assert curve.ring_frequencies[-1] == pytest.approx(0.5)

    def test_independent_noise_rings_average_to_zero(self):
        # Monte-Carlo expectation: per-ring correlation of independent
        # noise has mean zero; rings with >= 20 bins estimated over 50 seeds
        n = 64
        curves = []
        for seed in range(50):
            rng = np.random.default_rng(900 + seed)
            curves.append(frc(rng.random((n, n)), rng.random((n, n))).correlations)
        counts = frc(np.ones((n, n)) * 0.3, np.ones((n, n)) * 0.7).ring_counts
        mean_corr = np.abs(np.mean(curves, axis=0))
        assert mean_corr[counts >= 20].max() < 0.15

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_degraded_image_crossing_near_band_edge(self, seed):
        # 4x block averaging destroys content at its transfer null 1/4;
        # for a band-limited pattern the fixed-threshold crossing lands
        # within one ring of 0.25
        n = 64
        x = bandlimited_pattern(n, seed)
        degraded = bicubic_upsample(block_average(x, 4), 4)
        curve = frc(x, degraded, threshold_kind="fixed")
        assert curve.crossing_frequency is not None
        assert abs(curve.crossing_frequency - 0.25) <= 1.0 / n + 1e-12

    def test_degraded_image_halfbit_crossing_upper_bound(self):
        x = np.random.default_rng(8).random((64, 64))
        degraded = bicubic_upsample(block_average(x, 4), 4)
        curve = frc(x, degraded)
        assert curve.crossing_frequency is not None
        assert curve.crossing_frequency <= 0.25 + 1.0 / 64

    def test_requires_square(self):
        with pytest.raises(ValueError):
            frc(np.zeros((4, 6)), np.zeros((4, 6)))

    def test_requires_equal_shapes(self):
        with pytest.raises(ValueError):
            frc(np.zeros((4, 4)), np.zeros((6, 6)))

    def test_unknown_threshold_kind(self):
        x = np.zeros((8, 8)) + 0.5
        with pytest.raises(ValueError):
            frc(x, x, threshold_kind="third-bit")

    def test_csv_export(self, tmp_path):
        x = np.random.default_rng(9).random((16, 16))
        curve = frc(x, x)
        out = tmp_path / "frc.csv"
        curve.write_csv(out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "frequency,correlation,threshold"
        assert len(lines) == 1 + len(curve.ring_frequencies)

    def test_curve_validation(self):
        with pytest.raises(ValueError):
            FrcCurve(
                ring_frequencies=np.array([0.2, 0.1]),
                correlations=np.zeros(2),
                threshold=np.zeros(2),
                ring_counts=np.ones(2),
                crossing_frequency=None,
            )


class TestSpeedup:
    def test_ideal_case_is_factor_squared(self):
        inp = SpeedupInput(
            lr_pixels=(100, 80),
            hr_train_pixels=(0, 0),
            hr_recon_pixels=(400, 320),
        )
        assert speedup(inp) == pytest.approx(16.0, abs=0)

    def test_nanorods_5x_acquisition(self):
        inp = SpeedupInput(
            lr_pixels=(2048, 1388),
            hr_train_pixels=(1232, 1367),
            hr_recon_pixels=(10240, 6940),
        )
        assert round(speedup(inp), 2) == 15.70

    def test_nanorods_8x_acquisition(self):
        inp = SpeedupInput(
            lr_pixels=(2048, 1388),
            hr_train_pixels=(1232, 1367),
            hr_recon_pixels=(16384, 11104),
        )
        assert round(speedup(inp), 2) == 40.19

    def test_biofilm_4x_acquisition(self):
        inp = SpeedupInput(
            lr_pixels=(7404, 7666),
            hr_train_pixels=(5049, 9827),
            hr_recon_pixels=(29616, 30664),
        )
        assert round(speedup(inp), 2) == 8.54

    def test_dimension_validation(self):
        with pytest.raises(ValueError):
            SpeedupInput((0, 10), (0, 0), (10, 10))
        with pytest.raises(ValueError):
            SpeedupInput((10, 10), (-1, 5), (10, 10))
