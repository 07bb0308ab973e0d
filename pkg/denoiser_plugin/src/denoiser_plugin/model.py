"""Residual denoiser architecture and its one-file serialization.

The network predicts the noise; the denoised image is input minus
prediction.  Layout: Conv+ReLU, then (depth - 2) Conv+BatchNorm+ReLU
blocks, then a final Conv, all 3x3.  Width (filter count) is a knob for
desk-scale runs; 64 is the full-size default.

Models are stored as a single file with an embedded architecture
descriptor so serving never depends on the training code path.
"""

from __future__ import annotations

from pathlib import Path

import torch
from torch import nn

MODEL_FORMAT_VERSION = 1


class ResidualDenoiser(nn.Module):
    """DnCNN-style noise predictor: ``denoise(x) = x - net(x)``."""

    def __init__(self, depth: int = 17, width: int = 64):
        super().__init__()
        if depth < 3:
            raise ValueError("depth must be at least 3")
        if width < 1:
            raise ValueError("width must be positive")
        self.depth = depth
        self.width = width
        layers: list[nn.Module] = [
            nn.Conv2d(1, width, kernel_size=3, padding=1),
            nn.ReLU(inplace=True),
        ]
        for _ in range(depth - 2):
            layers += [
                nn.Conv2d(width, width, kernel_size=3, padding=1, bias=False),
                nn.BatchNorm2d(width),
                nn.ReLU(inplace=True),
            ]
        layers.append(nn.Conv2d(width, 1, kernel_size=3, padding=1))
        self.net = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)

    @torch.no_grad()
    def denoise(self, x: torch.Tensor) -> torch.Tensor:
        return x - self.net(x)


def save_model(path: str | Path, model: ResidualDenoiser) -> None:
    torch.save(
        {
            "format_version": MODEL_FORMAT_VERSION,
            "arch": {"depth": model.depth, "width": model.width},
            "state_dict": model.state_dict(),
        },
        Path(path),
    )


def load_model(path: str | Path) -> ResidualDenoiser:
    payload = torch.load(Path(path), map_location="cpu", weights_only=True)
    version = payload.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version!r}")
    model = ResidualDenoiser(**payload["arch"])
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model
