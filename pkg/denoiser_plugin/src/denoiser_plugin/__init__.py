"""Reference external-denoiser endpoint for consensus reconstruction.

Trains a residual CNN denoiser (DnCNN-style: predict the noise, subtract
it) on patches cropped from user-supplied high-resolution images, and
serves it over the binary frame protocol that the reconstruction engine's
external-denoiser client speaks (magic ``MDF1``, u32 height/width,
float64 payload; little-endian throughout).
"""

from .data import PatchDataset
from .model import ResidualDenoiser, load_model, save_model
from .training import TrainingConfig, train

__version__ = "0.1.0"

__all__ = [
    "PatchDataset",
    "ResidualDenoiser",
    "TrainingConfig",
    "load_model",
    "save_model",
    "train",
    "__version__",
]
