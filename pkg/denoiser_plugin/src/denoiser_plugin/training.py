"""Training loop for the residual denoiser.

The network learns the noise: loss is MSE between the predicted residual
and the actual noise added to each clean patch.  Validation loss is
checked every epoch; the first increase stops training (overfitting
guard), keeping the best-validation weights.  A JSON training log is
written next to the model file.

The optimizer (Adam), learning rate and batch size are implementation
defaults, recorded in the log.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .data import PatchDataset
from .model import ResidualDenoiser, save_model


class TrainingError(RuntimeError):
    """Training could not proceed (bad config, no data, non-finite loss)."""


@dataclass(frozen=True)
class TrainingConfig:
    patch_size: int = 180
    num_patches: int = 400
    noise_sigma: float = 0.1
    depth: int = 17
    width: int = 64
    max_epochs: int = 50
    batch_size: int = 16
    learning_rate: float = 1e-3
    patience: int = 2  # epochs without a new best validation loss; 1 stops
    # on the first non-improving epoch
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_epochs < 1:
            raise TrainingError("max_epochs must be at least 1")
        if self.batch_size < 1:
            raise TrainingError("batch_size must be positive")
        if self.noise_sigma <= 0:
            raise TrainingError("noise_sigma must be positive")
        if self.patience < 1:
            raise TrainingError("patience must be at least 1")


def _epoch_pass(model, dataset, split, epoch, batch_size, optimizer=None):
    clean = torch.from_numpy(dataset.clean(split)).float().unsqueeze(1)
    noisy = torch.from_numpy(dataset.noisy(split, epoch)).float().unsqueeze(1)
    noise = noisy - clean
    criterion = nn.MSELoss()
    losses = []
    for start in range(0, clean.shape[0], batch_size):
        batch_noisy = noisy[start:start + batch_size]
        batch_noise = noise[start:start + batch_size]
        if optimizer is not None:
            optimizer.zero_grad()
            loss = criterion(model(batch_noisy), batch_noise)
            loss.backward()
            optimizer.step()
        else:
            with torch.no_grad():
                loss = criterion(model(batch_noisy), batch_noise)
        value = float(loss.detach())
        if not np.isfinite(value):
            raise TrainingError(f"non-finite loss in epoch {epoch} ({split})")
        losses.append(value)
    return float(np.mean(losses))


def train(
    images: list[np.ndarray],
    config: TrainingConfig,
    model_path: str | Path,
) -> dict:
    """Train on crops of ``images`` and write the model plus its log.

    Returns the training log as a dict (also written to
    ``<model_path>.log.json``).

    Raises:
        TrainingError: no usable data, bad config, or non-finite loss.
    """
    model_path = Path(model_path)
    try:
        dataset = PatchDataset(
            images,
            patch_size=config.patch_size,
            num_patches=config.num_patches,
            noise_sigma=config.noise_sigma,
            seed=config.seed,
        )
    except ValueError as exc:
        raise TrainingError(str(exc)) from exc

    torch.manual_seed(config.seed)
    model = ResidualDenoiser(depth=config.depth, width=config.width)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)

    history = []
    best_val = float("inf")
    best_state = None
    stopped_early = False
    epochs_since_best = 0
    start_time = time.monotonic()
    for epoch in range(config.max_epochs):
        model.train()
        train_loss = _epoch_pass(
            model, dataset, "train", epoch, config.batch_size, optimizer
        )
        model.eval()
        val_loss = _epoch_pass(model, dataset, "val", epoch, config.batch_size)
        history.append({"epoch": epoch, "train_loss": train_loss,
                        "val_loss": val_loss})
        if val_loss < best_val:
            best_val = val_loss
            epochs_since_best = 0
            best_state = {
                k: v.detach().clone() for k, v in model.state_dict().items()
            }
        else:
            epochs_since_best += 1
            if epochs_since_best >= config.patience:
                stopped_early = True
                break

    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    save_model(model_path, model)

    log = {
        "config": asdict(config),
        "optimizer": "Adam",
        "epochs_run": len(history),
        "stopped_on_validation_increase": stopped_early,
        "best_val_loss": best_val,
        "history": history,
        "split_sizes": {s: dataset.size(s) for s in ("train", "val", "test")},
        "duration_seconds": time.monotonic() - start_time,
    }
    log_path = model_path.with_suffix(model_path.suffix + ".log.json")
    with open(log_path, "w", encoding="utf-8") as fh:
        json.dump(log, fh, indent=2)
        fh.write("\n")
    return log
