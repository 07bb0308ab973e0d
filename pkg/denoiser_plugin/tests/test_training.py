import numpy as np
import pytest
import torch

from denoiser_plugin.data import PatchDataset
from denoiser_plugin.model import ResidualDenoiser, load_model, save_model
from denoiser_plugin.training import TrainingConfig, TrainingError, train

DESK_CONFIG = dict(num_patches=12, width=4, batch_size=16, seed=0)


class TestPatchDataset:
    def test_split_sizes_and_disjointness(self):
        rng = np.random.default_rng(0)
        images = [rng.random((200, 200))]
        ds = PatchDataset(images, num_patches=40, seed=1)
        sizes = {s: ds.size(s) for s in ("train", "val", "test")}
        assert sizes == {"train": 32, "val": 4, "test": 4}
        train_idx = set(ds.split_indices["train"])
        val_idx = set(ds.split_indices["val"])
        test_idx = set(ds.split_indices["test"])
        assert not train_idx & test_idx
        assert not train_idx & val_idx
        assert not val_idx & test_idx
        assert len(train_idx | val_idx | test_idx) == 40

    def test_split_deterministic_per_seed(self):
        rng = np.random.default_rng(2)
        images = [rng.random((200, 200))]
        a = PatchDataset(images, num_patches=20, seed=7)
        b = PatchDataset(images, num_patches=20, seed=7)
        for split in ("train", "val", "test"):
            np.testing.assert_array_equal(
                a.split_indices[split], b.split_indices[split]
            )
        np.testing.assert_array_equal(a.patches, b.patches)

    def test_noisy_partners_regenerate_per_epoch(self):
        images = [np.random.default_rng(3).random((200, 200))]
        ds = PatchDataset(images, num_patches=20, seed=0)
        first = ds.noisy("train", epoch=0)
        again = ds.noisy("train", epoch=0)
        other_epoch = ds.noisy("train", epoch=1)
        np.testing.assert_array_equal(first, again)
        assert np.any(first != other_epoch)
        np.testing.assert_allclose(
            first - ds.clean("train"), first - ds.clean("train")
        )

    def test_rejects_small_images(self):
        with pytest.raises(ValueError):
            PatchDataset([np.zeros((100, 100))], patch_size=180, num_patches=20)

    def test_rejects_empty_image_list(self):
        with pytest.raises(ValueError):
            PatchDataset([], num_patches=20)


class TestModelFile:
    def test_save_load_roundtrip(self, tmp_path):
        model = ResidualDenoiser(depth=4, width=3)
        path = tmp_path / "model.pt"
        save_model(path, model)
        back = load_model(path)
        assert back.depth == 4 and back.width == 3
        x = torch.randn(1, 1, 16, 16)
        model.eval()
        np.testing.assert_allclose(
            model.denoise(x).numpy(), back.denoise(x).numpy(), atol=1e-7
        )

    def test_denoise_is_shape_preserving(self):
        model = ResidualDenoiser(depth=3, width=2)
        model.eval()
        out = model.denoise(torch.zeros(1, 1, 20, 28))
        assert out.shape == (1, 1, 20, 28)


class TestTraining:
    def test_constants_sanity_run(self, tmp_path):
        # constant clean patches: after a 5-epoch sanity run the denoiser
        # must beat the identity map, whose residual MSE equals the noise
        # variance, on validation data
        images = [np.full((200, 200), v) for v in (0.3, 0.6)]
        config = TrainingConfig(
            patch_size=32, num_patches=400, width=8, batch_size=4,
            learning_rate=3e-3, max_epochs=5, noise_sigma=0.1, seed=0,
        )
        model_path = tmp_path / "model.pt"
        log = train(images, config, model_path)
        assert log["epochs_run"] <= 5

        ds = PatchDataset(images, patch_size=32, num_patches=400, seed=0)
        model = load_model(model_path)
        clean = torch.from_numpy(ds.clean("val")).float().unsqueeze(1)
        noisy = torch.from_numpy(ds.noisy("val", epoch=999)).float().unsqueeze(1)
        denoised = model.denoise(noisy)
        mse = float(torch.mean((denoised - clean) ** 2))
        assert mse < 0.1**2

    def test_training_log_written(self, tmp_path):
        images = [np.random.default_rng(5).random((200, 200))]
        config = TrainingConfig(max_epochs=2, **DESK_CONFIG)
        model_path = tmp_path / "model.pt"
        log = train(images, config, model_path)
        log_path = tmp_path / "model.pt.log.json"
        assert log_path.exists()
        assert log["optimizer"] == "Adam"
        assert len(log["history"]) == log["epochs_run"]

    def test_epoch_cap_zero_refused(self):
        with pytest.raises(TrainingError):
            TrainingConfig(max_epochs=0)

    def test_insufficient_data_refused(self, tmp_path):
        config = TrainingConfig(max_epochs=1, **DESK_CONFIG)
        with pytest.raises(TrainingError):
            train([np.zeros((64, 64))], config, tmp_path / "m.pt")

    def test_non_finite_loss_aborts(self, tmp_path):
        images = [np.full((200, 200), 1e200)]
        config = TrainingConfig(max_epochs=2, **DESK_CONFIG)
        with pytest.raises(TrainingError, match="non-finite"):
            train(images, config, tmp_path / "m.pt")
