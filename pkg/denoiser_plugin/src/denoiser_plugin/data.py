"""Patch extraction and the train/validation/test split.

Clean patches are random crops from the supplied high-resolution images.
Noisy partners are *not* stored: they are regenerated on every access from
the split name, epoch and patch index, so each training epoch sees fresh
noise while everything stays reproducible under the dataset seed.
"""

from __future__ import annotations

import numpy as np

SPLIT_FRACTIONS = {"train": 0.8, "val": 0.1, "test": 0.1}


class PatchDataset:
    """Random crops with per-epoch regenerated noisy partners.

    Args:
        images: one or more 2-D float arrays in [0, 1], each at least
            ``patch_size`` in both dimensions.
        patch_size: crop side length (180 matches full-size training).
        num_patches: total crops, drawn round-robin from the images.
        noise_sigma: AWGN level of the noisy partners.
        seed: governs crop positions, the split and all noise draws.
    """

    def __init__(
        self,
        images: list[np.ndarray],
        patch_size: int = 180,
        num_patches: int = 400,
        noise_sigma: float = 0.1,
        seed: int = 0,
    ):
        if not images:
            raise ValueError("need at least one training image")
        if noise_sigma <= 0:
            raise ValueError("noise_sigma must be positive")
        if num_patches < 10:
            raise ValueError("need at least 10 patches for an 80/10/10 split")
        for i, img in enumerate(images):
            img = np.asarray(img)
            if img.ndim != 2:
                raise ValueError(f"image {i} is not 2-D")
            if min(img.shape) < patch_size:
                raise ValueError(
                    f"image {i} of shape {img.shape} is smaller than the "
                    f"{patch_size}x{patch_size} patch size"
                )
        self.patch_size = patch_size
        self.noise_sigma = noise_sigma
        self.seed = seed

        rng = np.random.default_rng(seed)
        self.patches = np.empty(
            (num_patches, patch_size, patch_size), dtype=np.float64
        )
        for k in range(num_patches):
            img = np.asarray(images[k % len(images)], dtype=np.float64)
            top = int(rng.integers(0, img.shape[0] - patch_size + 1))
            left = int(rng.integers(0, img.shape[1] - patch_size + 1))
            self.patches[k] = img[top:top + patch_size, left:left + patch_size]

        order = rng.permutation(num_patches)
        n_train = int(round(SPLIT_FRACTIONS["train"] * num_patches))
        n_val = int(round(SPLIT_FRACTIONS["val"] * num_patches))
        self.split_indices = {
            "train": np.sort(order[:n_train]),
            "val": np.sort(order[n_train:n_train + n_val]),
            "test": np.sort(order[n_train + n_val:]),
        }

    def size(self, split: str) -> int:
        return len(self.split_indices[split])

    def clean(self, split: str) -> np.ndarray:
        """All clean patches of a split, shape (k, p, p)."""
        return self.patches[self.split_indices[split]]

    def noisy(self, split: str, epoch: int) -> np.ndarray:
        """Noisy partners for a split, freshly drawn per (split, epoch)."""
        clean = self.clean(split)
        split_tag = {"train": 0, "val": 1, "test": 2}[split]
        rng = np.random.default_rng((self.seed, split_tag, epoch))
        return clean + self.noise_sigma * rng.standard_normal(clean.shape)
