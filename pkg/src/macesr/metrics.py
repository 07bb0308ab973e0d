"""Quantitative evaluation: PSNR, Fourier ring correlation, speed-up.

Fourier ring correlation (FRC) measures, per spatial-frequency ring, the
normalized cross-correlation of two images' discrete Fourier spectra; the
first crossing of a threshold curve estimates the effective resolution.
Rings are indexed by rounded integer radius in frequency bins, one bin
wide, with the DC bin excluded.

The acquisition speed-up is the ratio of high-resolution pixels
reconstructed to pixels actually acquired (low-resolution field of view
plus any high-resolution training data).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linops import as_image

__all__ = [
    "FrcCurve",
    "SpeedupInput",
    "psnr",
    "frc",
    "speedup",
    "THRESHOLD_KINDS",
]

THRESHOLD_KINDS = ("half-bit", "one-bit", "fixed")


def psnr(reference: np.ndarray, test: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio ``10 log10(peak**2 / MSE)`` in decibels.

    Identical images return ``math.inf``.  ``peak`` defaults to 1.0 for
    normalized images; pass 255 for 8-bit scales.
    """
    reference = as_image(reference)
    test = as_image(test)
    if reference.shape != test.shape:
        raise ValueError(
            f"shape mismatch: {reference.shape} vs {test.shape}"
        )
    if peak <= 0:
        raise ValueError("peak must be positive")
    mse = float(np.mean((reference - test) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


@dataclass(frozen=True)
class FrcCurve:
    """A Fourier ring correlation curve with its threshold.

    Attributes:
        ring_frequencies: normalized spatial frequencies in (0, 0.5],
            strictly increasing (one per ring, DC excluded).
        correlations: per-ring normalized cross-spectral correlation.
        threshold: per-ring threshold values.
        ring_counts: number of Fourier bins per ring.
        crossing_frequency: first frequency whose correlation falls below
            the threshold, or ``None`` if the curve never crosses.
    """

    ring_frequencies: np.ndarray
    correlations: np.ndarray
    threshold: np.ndarray
    ring_counts: np.ndarray
    crossing_frequency: float | None

    def __post_init__(self) -> None:
        if not np.all(np.diff(self.ring_frequencies) > 0):
            raise ValueError("ring frequencies must be strictly increasing")
        if not (
            len(self.ring_frequencies)
            == len(self.correlations)
            == len(self.threshold)
            == len(self.ring_counts)
        ):
            raise ValueError("curve arrays must have equal length")

    def write_csv(self, path) -> None:
        """Export as CSV with columns frequency, correlation, threshold."""
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("frequency,correlation,threshold\n")
            for f, c, t in zip(
                self.ring_frequencies, self.correlations, self.threshold
            ):
                fh.write(f"{f:.10g},{c:.10g},{t:.10g}\n")


def _threshold_curve(kind: str, counts: np.ndarray) -> np.ndarray:
    """Per-ring threshold values.

    The information-based curves decay with the number of independent bins
    in a ring; ``fixed`` is the flat 1/7 convention.
    """
    counts = np.maximum(counts.astype(np.float64), 1.0)
    root = np.sqrt(counts)
    if kind == "half-bit":
        return (0.2071 + 1.9102 / root) / (1.2071 + 0.9102 / root)
    if kind == "one-bit":
        return (0.5 + 2.4142 / root) / (1.5 + 1.4142 / root)
    if kind == "fixed":
        return np.full_like(counts, 1.0 / 7.0)
    raise ValueError(
        f"unknown threshold kind {kind!r}; expected one of {THRESHOLD_KINDS}"
    )


def frc(
    img1: np.ndarray, img2: np.ndarray, threshold_kind: str = "half-bit"
) -> FrcCurve:
    """Fourier ring correlation between two equally shaped square images.

    Per ring ``r`` (rounded integer radius in frequency bins):

        corr_r = Re(sum F1 conj(F2)) / sqrt(sum |F1|**2 * sum |F2|**2)

    The real part makes the curve symmetric in its arguments.  Rings run
    from 1 to n//2 (normalized frequencies 1/n .. 0.5).
    """
    img1 = as_image(img1)
    img2 = as_image(img2)
    if img1.shape != img2.shape:
        raise ValueError(f"shape mismatch: {img1.shape} vs {img2.shape}")
    n = img1.shape[0]
    if img1.shape[0] != img1.shape[1]:
        raise ValueError(f"square images required, got {img1.shape}")

    f1 = np.fft.fft2(img1)
    f2 = np.fft.fft2(img2)
    bins = np.fft.fftfreq(n) * n
    radius = np.hypot(bins[:, None], bins[None, :])
    ring = np.rint(radius).astype(np.int64).ravel()

    max_ring = n // 2
    cross = (f1 * np.conj(f2)).ravel()
    p1 = np.abs(f1.ravel()) ** 2
    p2 = np.abs(f2.ravel()) ** 2

    num = np.bincount(ring, weights=cross.real, minlength=max_ring + 1)
    den1 = np.bincount(ring, weights=p1, minlength=max_ring + 1)
    den2 = np.bincount(ring, weights=p2, minlength=max_ring + 1)
    counts = np.bincount(ring, minlength=max_ring + 1)

    rings = np.arange(1, max_ring + 1)
    denom = np.sqrt(den1[rings] * den2[rings])
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.where(denom > 0, num[rings] / np.where(denom > 0, denom, 1.0), 0.0)

    freqs = rings / float(n)
    thresh = _threshold_curve(threshold_kind, counts[rings])
    below = corr < thresh
    crossing = float(freqs[np.argmax(below)]) if np.any(below) else None
    return FrcCurve(
        ring_frequencies=freqs,
        correlations=corr,
        threshold=thresh,
        ring_counts=counts[rings],
        crossing_frequency=crossing,
    )


@dataclass(frozen=True)
class SpeedupInput:
    """Pixel grids entering the acquisition speed-up ratio.

    ``hr_train_pixels`` may be ``(0, 0)`` when no training data was
    acquired (the ideal case).
    """

    lr_pixels: tuple[int, int]
    hr_train_pixels: tuple[int, int]
    hr_recon_pixels: tuple[int, int]

    def __post_init__(self) -> None:
        for name in ("lr_pixels", "hr_recon_pixels"):
            h, w = getattr(self, name)
            if h <= 0 or w <= 0:
                raise ValueError(f"{name} must be positive, got {(h, w)}")
        th, tw = self.hr_train_pixels
        if th < 0 or tw < 0:
            raise ValueError("hr_train_pixels must be nonnegative")


def speedup(inp: SpeedupInput) -> float:
    """Reconstructed HR pixels over acquired pixels (LR plus HR training)."""
    acquired = (
        inp.lr_pixels[0] * inp.lr_pixels[1]
        + inp.hr_train_pixels[0] * inp.hr_train_pixels[1]
    )
    reconstructed = inp.hr_recon_pixels[0] * inp.hr_recon_pixels[1]
    return reconstructed / acquired
