import numpy as np
import pytest

from pdmm.config import RunConfig
from pdmm.models import (
    CheckpointError,
    build_hybrid_model,
    build_image_model,
    build_symptoms_model,
    checkpoint_load,
    checkpoint_save,
    named_tensors,
    predict_proba,
    predicted_stage,
)
from pdmm.nn import ShapeError, sgd_step
from pdmm.tabular import NormStats
from pdmm.traineval import Dataset, train_model
from pdmm import canonical


def rng_for(seed):
    return np.random.default_rng(seed)


class TestSymptomsModel:
    def test_logistic_param_count(self):
        model = build_symptoms_model(94, deep=False)
        assert model.n_params() == 94 * 5 + 5

    def test_deep_param_count(self):
        model = build_symptoms_model(94, hidden_width=64, deep=True)
        assert model.n_params() == 94 * 64 + 64 + 64 * 5 + 5

    def test_five_logits(self):
        model = build_symptoms_model(10, deep=True)
        assert model.forward(features=rng_for(0).standard_normal(10)).shape == (5,)

    def test_invalid_feature_count(self):
        with pytest.raises(ValueError):
            build_symptoms_model(0)


class TestImageModel:
    def test_spatial_trace_flat_128(self):
        model = build_image_model(64)
        embed = next(l for l in model.image_layers if l.name == "embed")
        assert embed.params["weight"].shape == (64, 32 * 2 * 2)

    def test_too_small_side(self):
        with pytest.raises(ShapeError):
            build_image_model(16)
        with pytest.raises(ShapeError):
            build_image_model(32)

    def test_forward_five_logits(self):
        model = build_image_model(48)
        logits = model.forward(image=rng_for(1).standard_normal((3, 48, 48)))
        assert logits.shape == (5,)

    def test_frozen_backbone_unchanged_by_training(self):
        model = build_image_model(48, backbone_frozen=True, seed=3)
        before = {
            name: p.copy()
            for name, p in named_tensors(model).items()
            if name.startswith("backbone")
        }
        data = Dataset(
            ids=[f"p{i}" for i in range(6)],
            stages=[i % 5 for i in range(6)],
            images=[rng_for(i).standard_normal((3, 48, 48)) for i in range(6)],
        )
        cfg = RunConfig(epochs=2, batch_size=2, image_side=48)
        train_model(model, data, cfg, seed=3)
        for name, p in named_tensors(model).items():
            if name.startswith("backbone"):
                np.testing.assert_array_equal(p, before[name])
        # backbone gradients identically 0 after any step
        for layer in model.image_layers:
            if layer.name.startswith("backbone"):
                for g in layer.grads.values():
                    assert not g.any()


class TestHybridModel:
    def test_fusion_width(self):
        model = build_hybrid_model(64, 94)
        fusion = next(l for l in model.head_layers if l.name == "fusion")
        assert fusion.params["weight"].shape == (64, 96)

    def test_zeroed_image_path_ignores_image(self):
        model = build_hybrid_model(48, 7, seed=5)
        for layer in model.image_layers:
            for p in layer.params.values():
                p[...] = 0.0
        feats = rng_for(6).standard_normal(7)
        a = model.forward(features=feats, image=rng_for(7).standard_normal((3, 48, 48)))
        b = model.forward(features=feats, image=rng_for(8).standard_normal((3, 48, 48)))
        np.testing.assert_array_equal(a, b)

    def test_probs_simplex(self):
        model = build_hybrid_model(48, 4, seed=9)
        probs = predict_proba(
            model,
            features=rng_for(10).standard_normal(4),
            image=rng_for(11).standard_normal((3, 48, 48)),
        )
        assert probs.sum() == pytest.approx(1.0, abs=1e-9)
        assert (probs > 0).all()

    def test_missing_modality_error(self):
        model = build_hybrid_model(48, 4)
        with pytest.raises(ValueError):
            model.forward(features=np.zeros(4))


class TestShapeChain:
    @pytest.mark.parametrize("side", [46, 48, 64])
    @pytest.mark.parametrize("n_features", [1, 10, 94])
    def test_buildable_grid(self, side, n_features):
        model = build_hybrid_model(side, n_features, seed=1)
        logits = model.forward(
            features=rng_for(0).standard_normal(n_features),
            image=rng_for(1).standard_normal((3, side, side)),
        )
        assert logits.shape == (5,)

    def test_grid_side_32_not_buildable(self):
        with pytest.raises(ShapeError):
            build_image_model(32)


class TestPredict:
    def test_deterministic(self):
        x = rng_for(12).standard_normal(8)
        a = predict_proba(build_symptoms_model(8, seed=7), features=x)
        b = predict_proba(build_symptoms_model(8, seed=7), features=x)
        np.testing.assert_array_equal(a, b)

    def test_argmax_tie_lowest_index(self):
        assert predicted_stage(np.array([0.3, 0.3, 0.2, 0.1, 0.1])) == 0

    def test_score_rendering_two_decimals(self):
        probs = np.array([0.02, 0.45, 0.51, 0.0, 0.02])
        rendered = "[" + ", ".join(f"{p:.2f}" for p in probs) + "]"
        assert rendered == "[0.02, 0.45, 0.51, 0.00, 0.02]"
        assert predicted_stage(probs) == 2


class TestCheckpoint:
    def make_model(self):
        model = build_symptoms_model(5, deep=False, seed=13)
        model.norm_stats = NormStats(
            means=np.arange(5.0), stddevs=np.ones(5) + np.arange(5) * 0.1
        )
        return model

    def test_save_load_save_byte_identical(self, tmp_path):
        model = self.make_model()
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        checkpoint_save(model, p1)
        checkpoint_save(checkpoint_load(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_predictions_bit_identical(self, tmp_path):
        model = build_hybrid_model(48, 6, seed=14)
        model.norm_stats = NormStats(means=np.zeros(6), stddevs=np.ones(6))
        path = tmp_path / "c.json"
        checkpoint_save(model, path)
        loaded = checkpoint_load(path)
        feats = rng_for(15).standard_normal(6)
        img = rng_for(16).standard_normal((3, 48, 48))
        np.testing.assert_array_equal(
            predict_proba(model, features=feats, image=img),
            predict_proba(loaded, features=feats, image=img),
        )

    def test_logistic_checkpoint_two_tensors(self, tmp_path):
        path = tmp_path / "c.json"
        model = self.make_model()
        assert model.n_params() == 5 * 5 + 5
        checkpoint_save(model, path)
        doc = canonical.load_file(path)
        assert sorted(doc["tensors"]) == ["output.bias", "output.weight"]
        assert doc["norm_stats"] is not None

    def test_tampered_shape_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        checkpoint_save(self.make_model(), path)
        doc = canonical.load_file(path)
        doc["tensors"]["output.weight"]["shape"] = [5, 4]
        canonical.dump_file(doc, path)
        with pytest.raises(CheckpointError, match="shape"):
            checkpoint_load(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "c.json"
        checkpoint_save(self.make_model(), path)
        doc = canonical.load_file(path)
        doc["format_version"] = 2
        canonical.dump_file(doc, path)
        with pytest.raises(CheckpointError, match="format_version"):
            checkpoint_load(path)

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{not json")
        with pytest.raises(CheckpointError):
            checkpoint_load(path)
