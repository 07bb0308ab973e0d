"""Experiment shell: image I/O, synthetic data, orchestration, persistence.

A reconstruction run is described by one JSON config document (versioned
with ``schema_version``); command-line flags may override individual keys.
Runs are deterministic given the config snapshot and seed: simulated noise
is seeded, agents are deterministic, so the convergence trace reproduces
bitwise.

Outputs per run: the reconstruction as 16-bit grayscale PNG, the
convergence trace CSV (``iteration,convergence_error``), a metrics CSV
(``name,value``) and a config snapshot JSON.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import imageio.v3 as iio
import numpy as np

from . import mace
from .agents import (
    DenoiserSpec,
    ExternalDenoiser,
    NoiseParams,
    data_fidelity_agent,
    make_denoiser,
    rap_agent,
)
from .linops import as_image, block_average
from .metrics import FrcCurve, SpeedupInput, frc, psnr, speedup

__all__ = [
    "SCHEMA_VERSION",
    "ConfigError",
    "UnsupportedImageFormatError",
    "CorruptImageError",
    "ExperimentConfig",
    "RunRecord",
    "load_image",
    "save_image",
    "simulate_lr",
    "make_phantom",
    "run_reconstruction",
    "write_trace_csv",
    "write_metrics_csv",
]

SCHEMA_VERSION = 1

_SUPPORTED_SUFFIXES = {".png", ".tif", ".tiff", ".bmp", ".jpg", ".jpeg"}


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class UnsupportedImageFormatError(ValueError):
    """The file extension is not a supported image format."""


class CorruptImageError(ValueError):
    """The file exists but cannot be decoded."""


def load_image(path: str | Path) -> np.ndarray:
    """Read an image as a grayscale float64 array in [0, 1].

    Integer inputs are scaled by their type's full range (1/255 for 8-bit,
    1/65535 for 16-bit); multi-channel inputs are reduced by averaging the
    color channels.
    """
    path = Path(path)
    if path.suffix.lower() not in _SUPPORTED_SUFFIXES:
        raise UnsupportedImageFormatError(
            f"unsupported image format {path.suffix!r} for {path}"
        )
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        raw = iio.imread(path)
    except Exception as exc:
        raise CorruptImageError(f"cannot decode {path}: {exc}") from exc
    arr = np.asarray(raw)
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float64) / 255.0
    elif arr.dtype == np.uint16:
        arr = arr.astype(np.float64) / 65535.0
    else:
        arr = np.clip(arr.astype(np.float64), 0.0, 1.0)
    if arr.ndim == 3:
        channels = min(arr.shape[2], 3)  # drop alpha
        arr = arr[:, :, :channels].mean(axis=2)
    return as_image(arr)


def save_image(path: str | Path, image: np.ndarray) -> None:
    """Write a [0, 1] image as 16-bit grayscale PNG (values clipped)."""
    image = as_image(image)
    scaled = np.round(np.clip(image, 0.0, 1.0) * 65535.0).astype(np.uint16)
    iio.imwrite(Path(path), scaled, extension=".png")


def simulate_lr(
    hr: np.ndarray, factor: int, sigma_w: float, seed: int | None = 0
) -> np.ndarray:
    """Apply the measurement model: block average plus seeded white noise."""
    hr = as_image(hr)
    lr = block_average(hr, factor)
    if sigma_w < 0:
        raise ValueError("sigma_w must be nonnegative")
    if sigma_w > 0:
        rng = np.random.default_rng(seed)
        lr = lr + sigma_w * rng.standard_normal(lr.shape)
    return lr


# ---------------------------------------------------------------------------
# Phantoms
# ---------------------------------------------------------------------------

PHANTOM_KINDS = ("crystals", "rods", "texture")


def _crystals_phantom(size: int, rng: np.random.Generator) -> np.ndarray:
    """Piecewise-constant polygonal regions: nearest-seed labeling with
    distinct gray levels, regenerated until every region has >= 16 px."""
    num_cells = max(4, size * size // 1500)
    levels = np.linspace(0.15, 0.9, 6)
    for _ in range(50):
        points = rng.uniform(0, size, size=(num_cells, 2))
        grid_y, grid_x = np.mgrid[0:size, 0:size]
        d2 = (grid_y[..., None] - points[:, 0]) ** 2 + (
            grid_x[..., None] - points[:, 1]
        ) ** 2
        labels = np.argmin(d2, axis=2)
        counts = np.bincount(labels.ravel(), minlength=num_cells)
        if counts.min() < 16:
            continue
        values = rng.choice(levels, size=num_cells)
        if len(np.unique(values)) < 2:
            continue
        return values[labels]
    raise RuntimeError("failed to generate a crystals phantom")


def _rods_phantom(size: int, rng: np.random.Generator) -> np.ndarray:
    """Bright anti-aliased line segments on a dark background."""
    img = np.full((size, size), 0.08)
    grid_y, grid_x = np.mgrid[0:size, 0:size].astype(np.float64)
    num_rods = max(4, size // 16)
    for _ in range(num_rods):
        p0 = rng.uniform(0.1 * size, 0.9 * size, size=2)
        angle = rng.uniform(0, np.pi)
        length = rng.uniform(0.25 * size, 0.6 * size)
        p1 = p0 + length * np.array([np.sin(angle), np.cos(angle)])
        d = p1 - p0
        t = ((grid_y - p0[0]) * d[0] + (grid_x - p0[1]) * d[1]) / (d @ d)
        t = np.clip(t, 0.0, 1.0)
        dist = np.hypot(grid_y - (p0[0] + t * d[0]), grid_x - (p0[1] + t * d[1]))
        half_width = rng.uniform(1.0, 2.5)
        intensity = rng.uniform(0.7, 0.95)
        profile = intensity * np.clip(half_width + 0.7 - dist, 0.0, 0.7) / 0.7
        img = np.maximum(img, profile)
    return np.clip(img, 0.0, 1.0)


def _texture_phantom(size: int, rng: np.random.Generator) -> np.ndarray:
    """Band-limited filtered noise stretched into [0.05, 0.95]."""
    from scipy.ndimage import gaussian_filter

    noise = rng.standard_normal((size, size))
    smooth = gaussian_filter(noise, sigma=2.0, mode="wrap")
    lo, hi = smooth.min(), smooth.max()
    return 0.05 + 0.9 * (smooth - lo) / (hi - lo)


def make_phantom(kind: str, size: int, seed: int = 0) -> np.ndarray:
    """Generate a synthetic test image in [0, 1].

    Kinds: ``crystals`` (piecewise-constant polygons), ``rods``
    (anti-aliased bright segments), ``texture`` (filtered noise).  ``size``
    must be a multiple of 8 so every common scale factor divides it.
    """
    if kind not in PHANTOM_KINDS:
        raise ValueError(f"unknown phantom kind {kind!r}; expected {PHANTOM_KINDS}")
    if size % 8:
        raise ValueError("phantom size must be a multiple of 8")
    rng = np.random.default_rng(seed)
    if kind == "crystals":
        return _crystals_phantom(size, rng)
    if kind == "rods":
        return _rods_phantom(size, rng)
    return _texture_phantom(size, rng)


# ---------------------------------------------------------------------------
# Experiment configuration
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    """Everything one reconstruction run depends on.

    Exactly one of ``hr_path`` (paired mode: the LR data is simulated from
    the HR image, quality metrics are reported against it) or ``lr_path``
    (measured mode: no reference, no PSNR/FRC) must be set.
    """

    factor: int
    output_dir: str
    hr_path: str | None = None
    lr_path: str | None = None
    mu: float = 0.5
    rho: float = 0.5
    tol: float = 0.05
    max_iters: int = 20
    sigma_w: float = 0.01
    sigma_lambda: float | None = None
    sigma_n: float = 0.1
    forward_kind: str = "rap"
    prior: DenoiserSpec = field(
        default_factory=lambda: DenoiserSpec(kind="tv", weight=0.02)
    )
    noise_seed: int = 0
    train_pixels: tuple[int, int] | None = None
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(
                f"unsupported schema_version {self.schema_version}; "
                f"this build reads version {SCHEMA_VERSION}"
            )
        if (self.hr_path is None) == (self.lr_path is None):
            raise ConfigError("set exactly one of hr_path or lr_path")
        if not 0.0 < self.mu < 1.0:
            raise ConfigError("mu must lie strictly inside (0, 1)")
        if self.forward_kind not in ("standard", "rap"):
            raise ConfigError("forward_kind must be 'standard' or 'rap'")
        if self.factor < 1:
            raise ConfigError("factor must be a positive integer")
        if self.sigma_w < 0:
            raise ConfigError("sigma_w must be nonnegative")
        # embedded configs validate their own invariants
        mace.MaceConfig(
            rho=self.rho, max_iters=self.max_iters, tol=self.tol,
            sigma_n=self.sigma_n,
        )

    def model_noise(self) -> NoiseParams:
        """Noise scales for the forward agent.

        A zero measurement ``sigma_w`` (noiseless simulation) is floored so
        the proximal gain stays defined; with the default balanced coupling
        the gain is 1/2 either way.
        """
        sigma_w = self.sigma_w if self.sigma_w > 0 else 1e-6
        sigma_lambda = (
            self.sigma_lambda
            if self.sigma_lambda is not None
            else sigma_w * self.factor
        )
        return NoiseParams(sigma_w=sigma_w, sigma_lambda=sigma_lambda)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "factor": self.factor,
            "output_dir": self.output_dir,
            "hr_path": self.hr_path,
            "lr_path": self.lr_path,
            "mu": self.mu,
            "rho": self.rho,
            "tol": self.tol,
            "max_iters": self.max_iters,
            "sigma_w": self.sigma_w,
            "sigma_lambda": self.sigma_lambda,
            "sigma_n": self.sigma_n,
            "forward_kind": self.forward_kind,
            "prior": self.prior.to_dict(),
            "noise_seed": self.noise_seed,
            "train_pixels": list(self.train_pixels) if self.train_pixels else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        if "prior" in data and isinstance(data["prior"], dict):
            data["prior"] = DenoiserSpec.from_dict(data["prior"])
        if data.get("train_pixels") is not None:
            data["train_pixels"] = tuple(data["train_pixels"])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"bad config keys: {exc}") from exc

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def write(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass
class RunRecord:
    """Everything produced by one reconstruction run."""

    config: dict
    metrics: dict
    convergence_trace: list[float]
    converged: bool
    iterations_run: int
    duration_seconds: float
    artifacts: dict


def write_trace_csv(path: str | Path, trace: list[float]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("iteration,convergence_error\n")
        for i, err in enumerate(trace):
            fh.write(f"{i},{err:.12g}\n")


def write_metrics_csv(path: str | Path, metrics: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("name,value\n")
        for name, value in metrics.items():
            fh.write(f"{name},{value:.12g}\n")


def run_reconstruction(config: ExperimentConfig) -> RunRecord:
    """Execute one configured reconstruction end to end.

    Paired mode simulates LR data from the HR reference and reports PSNR
    (and the FRC threshold crossing for square images); measured mode
    reconstructs only.  All artifacts land in ``config.output_dir``.
    """
    start = time.monotonic()
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    hr = None
    if config.hr_path is not None:
        hr = load_image(config.hr_path)
        if hr.shape[0] % config.factor or hr.shape[1] % config.factor:
            raise ConfigError(
                f"HR shape {hr.shape} not divisible by factor {config.factor}"
            )
        lr = simulate_lr(hr, config.factor, config.sigma_w, config.noise_seed)
    else:
        lr = load_image(config.lr_path)

    x0 = mace.initialize(lr, config.factor)
    params = config.model_noise()
    if config.forward_kind == "standard":
        forward = data_fidelity_agent(lr, config.factor, params)
    else:
        forward = rap_agent(lr, config.factor, params)

    client = None
    try:
        if config.prior.kind == "external":
            client = ExternalDenoiser(config.prior.endpoint)
        prior = make_denoiser(config.prior, client=client)
        solver_config = mace.MaceConfig(
            rho=config.rho, max_iters=config.max_iters, tol=config.tol,
            sigma_n=config.sigma_n,
        )
        report = mace.mace_solve(
            [forward, prior], x0, solver_config,
            weights=[config.mu, 1.0 - config.mu],
        )
    finally:
        if client is not None:
            client.close()

    recon = report.final_image
    metrics: dict[str, float] = {
        "iterations_run": float(report.iterations_run),
        "converged": float(report.converged),
        "final_convergence_error": report.convergence_trace[-1],
    }
    lr_norm = float(np.linalg.norm(lr))
    if lr_norm > 0:
        metrics["data_consistency"] = float(
            np.linalg.norm(block_average(recon, config.factor) - lr) / lr_norm
        )
    if hr is not None:
        metrics["psnr_db"] = psnr(hr, np.clip(recon, 0.0, 1.0))
        metrics["psnr_initial_db"] = psnr(hr, np.clip(x0, 0.0, 1.0))
        if hr.shape[0] == hr.shape[1]:
            curve = frc(hr, np.clip(recon, 0.0, 1.0))
            if curve.crossing_frequency is not None:
                metrics["frc_crossing"] = curve.crossing_frequency
            curve.write_csv(out_dir / "frc.csv")
    if config.train_pixels is not None:
        recon_shape = recon.shape
        metrics["speedup"] = speedup(
            SpeedupInput(
                lr_pixels=lr.shape,
                hr_train_pixels=config.train_pixels,
                hr_recon_pixels=recon_shape,
            )
        )

    artifacts = {
        "reconstruction": str(out_dir / "reconstruction.png"),
        "initialization": str(out_dir / "initialization.png"),
        "trace": str(out_dir / "trace.csv"),
        "metrics": str(out_dir / "metrics.csv"),
        "config": str(out_dir / "config.json"),
    }
    save_image(artifacts["reconstruction"], recon)
    save_image(artifacts["initialization"], x0)
    write_trace_csv(artifacts["trace"], report.convergence_trace)
    write_metrics_csv(artifacts["metrics"], metrics)
    config.write(artifacts["config"])

    return RunRecord(
        config=config.to_dict(),
        metrics=metrics,
        convergence_trace=list(report.convergence_trace),
        converged=report.converged,
        iterations_run=report.iterations_run,
        duration_seconds=time.monotonic() - start,
        artifacts=artifacts,
    )
