import numpy as np
import pytest

from tea import autodiff as ad
from tea.backbone import BackboneConfig
from tea.errors import DataFormatError
from tea.model import (ModelConfig, TeaModel, clone_model, config_hash,
                       load_checkpoint, save_checkpoint)


def tiny_model(seed=0, use_prototypes=True):
    config = ModelConfig(backbone=BackboneConfig(
        image_height=4, image_width=4, patch_height=2, patch_width=2,
        num_channels=2, num_classes=3, embed_dim=8, temporal_depth=1,
        spatial_depth=1, heads=2, max_day_offset=40),
        prototype_slot_span=5, recon_hidden=(12,),
        use_prototypes=use_prototypes)
    return TeaModel(config, seed=seed)


def tiny_batch(B=2, T=3, seed=0):
    rng = np.random.default_rng(seed)
    return {
        "values": rng.normal(size=(B, T, 2, 4, 4)).astype(np.float32),
        "day_offsets": np.tile(np.arange(T) * 5, (B, 1)),
        "valid_mask": np.ones((B, T), dtype=bool),
        "labels": rng.integers(0, 3, size=(B, 4, 4)),
    }


class TestForward:
    def test_outputs_present_per_flags(self):
        model = tiny_model()
        out = model.forward(tiny_batch(), with_reconstruction=True)
        assert out.logits.shape == (2, 3, 4, 4)
        assert out.similarity.shape == (2, 4, 3)
        assert out.reconstruction.shape == (2, 3, 2, 4, 4)
        bare = model.forward(tiny_batch(), use_prototypes=False,
                             with_similarity=False)
        assert bare.similarity is None and bare.reconstruction is None

    def test_prototype_confidence_changes_logits(self):
        model = tiny_model()
        batch = tiny_batch()
        with_conf = model.forward(batch, use_prototypes=True)
        without = model.forward(batch, use_prototypes=False)
        assert not np.allclose(with_conf.logits.data, without.logits.data)

    def test_all_invalid_crop_gets_neutral_confidence(self):
        model = tiny_model()
        batch = tiny_batch()
        batch["values"][1] = 0.0
        batch["valid_mask"][1] = False
        out = model.forward(batch)
        np.testing.assert_array_equal(out.similarity.data[1], 0.0)
        assert np.isfinite(out.logits.data).all()

    def test_predict_blocks_graph(self):
        model = tiny_model()
        masks = model.predict(tiny_batch())
        assert masks.shape == (2, 4, 4)
        assert masks.min() >= 0 and masks.max() < 3


class TestClone:
    def test_clone_matches_and_is_independent(self):
        model = tiny_model(seed=3)
        twin = clone_model(model)
        for name, p in model.named_parameters().items():
            np.testing.assert_array_equal(twin.named_parameters()[name].data, p.data)
        twin.named_parameters()["backbone.temporal_cls"].data += 1.0
        assert not np.array_equal(
            model.named_parameters()["backbone.temporal_cls"].data,
            twin.named_parameters()["backbone.temporal_cls"].data)


class TestCheckpoint:
    def test_round_trip_with_teacher_and_metadata(self, tmp_path):
        model, teacher = tiny_model(seed=1), tiny_model(seed=2)
        path = save_checkpoint(tmp_path / "ckpt.npz", model, teacher,
                               metadata={"step": 17, "ldiou": 0.5})
        loaded, loaded_teacher, meta = load_checkpoint(path)
        assert meta["step"] == 17 and meta["ldiou"] == 0.5
        assert meta["config_hash"] == config_hash(model.config.to_json())
        for name, p in model.named_parameters().items():
            np.testing.assert_array_equal(loaded.named_parameters()[name].data,
                                          p.data)
        for name, p in teacher.named_parameters().items():
            np.testing.assert_array_equal(
                loaded_teacher.named_parameters()[name].data, p.data)

    def test_checkpoint_preserves_forward(self, tmp_path):
        model = tiny_model(seed=4)
        batch = tiny_batch(seed=5)
        before = model.predict(batch)
        path = save_checkpoint(tmp_path / "ckpt.npz", model)
        loaded, teacher, _ = load_checkpoint(path)
        assert teacher is None
        np.testing.assert_array_equal(loaded.predict(batch), before)

    def test_config_json_round_trip(self):
        config = tiny_model().config
        twin = ModelConfig.from_json(config.to_json())
        assert twin == config

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "bogus.npz"
        np.savez(path, weights=np.zeros(3))
        with pytest.raises(DataFormatError):
            load_checkpoint(path)

    def test_dtype_cast(self, tmp_path):
        model = tiny_model(seed=6)
        path = save_checkpoint(tmp_path / "ckpt.npz", model)
        loaded, _, _ = load_checkpoint(path, dtype=np.float64)
        assert loaded.named_parameters()["backbone.temporal_cls"].dtype == np.float64
