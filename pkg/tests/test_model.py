"""Model assembly, forward shapes, ablation wiring, checkpoint round trips."""

import hashlib

import numpy as np
import pytest

from spixel import autodiff as ad
from spixel import kernels
from spixel.autodiff import Tensor
from spixel.checkpoint import load_checkpoint, save_checkpoint
from spixel.errors import CheckpointCompatError, CheckpointFormatError, ConfigError
from spixel.model import DESK_CONFIG, PAPER_CONFIG, ModelConfig, build

from oracles import conv2d_oracle


class TestConfig:
    def test_paper_config_valid(self):
        assert PAPER_CONFIG.levels == 4
        assert PAPER_CONFIG.widths == (32, 64, 128, 256)

    def test_bad_widths_count(self):
        with pytest.raises(ConfigError):
            ModelConfig(S=16, widths=(8, 16))

    def test_bad_s(self):
        with pytest.raises(ConfigError):
            ModelConfig(S=12, widths=(4, 8))

    def test_bad_variant(self):
        with pytest.raises(ConfigError):
            ModelConfig(variant="bogus")


class TestBuildAndForward:
    def test_paper_shapes(self):
        model = build(PAPER_CONFIG, rng=0)
        rng = np.random.default_rng(0)
        img = rng.random((208, 208, 3))
        q, e, m = model.forward(img)
        assert m.shape == (13, 13, 256)
        assert e.shape == (208, 208, 16)
        assert q.shape == (208, 208, 9)
        # compression chain 256 -> 64 -> 16
        assert model.params["comp_conv1_w"].shape == (64, 256, 3, 3)
        assert model.params["comp_conv2_w"].shape == (16, 64, 3, 3)
        assert model.config.K == 5

    def test_desk_shapes(self):
        model = build(ModelConfig(S=8, widths=(16, 32, 64), D=8, compress_mid=16), rng=1)
        rng = np.random.default_rng(1)
        q, e, m = model.forward(rng.random((64, 64, 3)))
        assert m.shape == (8, 8, 64)
        assert e.shape == (64, 64, 8)
        assert q.shape == (64, 64, 9)

    def test_same_seed_same_params(self):
        a = build(DESK_CONFIG, rng=7)
        b = build(DESK_CONFIG, rng=7)
        for name in a.params:
            assert np.array_equal(a.params[name].data, b.params[name].data)

    def test_different_seed_differs(self):
        a = build(DESK_CONFIG, rng=7)
        b = build(DESK_CONFIG, rng=8)
        assert any(
            not np.array_equal(a.params[n].data, b.params[n].data) for n in a.params
        )

    def test_q_is_valid_association_map(self):
        model = build(DESK_CONFIG, rng=3)
        rng = np.random.default_rng(3)
        q, _, _ = model.forward(rng.random((32, 32, 3)))
        qd = q.data
        assert qd.min() >= 0
        np.testing.assert_allclose(qd.sum(axis=-1), 1.0, atol=1e-6)

    def test_batch_items_independent(self):
        model = build(DESK_CONFIG, rng=4)
        rng = np.random.default_rng(4)
        img = rng.random((32, 32, 3))
        q2, e2, m2 = model.forward(np.stack([img, img]))
        np.testing.assert_array_equal(q2.data[0], q2.data[1])
        q1, _, _ = model.forward(img)
        np.testing.assert_allclose(q1.data, q2.data[0], atol=1e-6)

    def test_bad_dims_raise(self):
        model = build(DESK_CONFIG, rng=0)
        with pytest.raises(ConfigError):
            model.forward(np.zeros((30, 30, 3)))

    def test_forward_golden_digest(self, restore_backend):
        # pinned to the numpy backend; float64 rounded to 8 decimals so the
        # digest survives BLAS thread-count variations
        kernels.set_backend("numpy")
        cfg = ModelConfig(S=8, widths=(16, 32, 64), D=8, compress_mid=16,
                          precision="f64")
        model = build(cfg, rng=2024)
        rng = np.random.default_rng(2024)
        img = rng.random((16, 16, 3))
        q, _, _ = model.forward(img)
        digest = hashlib.sha256(np.round(q.data, 8).tobytes()).hexdigest()
        assert digest == "da0c0cff688bc14a5ce295b2b70c77be519d681e9deea28d23f6ff307640ec9d"


class TestAblationWiring:
    def test_no_ai_model_has_no_compress_params(self):
        cfg = ModelConfig(S=8, widths=(16, 32, 64), D=8, use_ai=False)
        model = build(cfg, rng=0)
        assert "comp_conv1_w" not in model.params
        assert "ai_w" in model.params
        rng = np.random.default_rng(0)
        q, _, _ = model.forward(rng.random((32, 32, 3)))
        assert q.shape == (32, 32, 9)

    def test_cpix_with_zero_cells_is_center_tap_conv(self):
        # cpix windows with zeroed cell embeddings hold only E at the center,
        # so fusing equals a 3x3 conv whose off-center taps are zeroed
        cfg = ModelConfig(S=8, widths=(8, 12, 16), D=4, compress_mid=4,
                          variant="cpix", precision="f64")
        model = build(cfg, rng=5)
        for name in ("comp_conv1_w", "comp_conv1_b", "comp_conv2_w", "comp_conv2_b"):
            model.params[name].data[:] = 0.0  # forces Mhat == 0
        rng = np.random.default_rng(5)
        img = rng.random((32, 32, 3))
        q_ai, e_ai, _ = model.forward(img)

        center_only = np.zeros_like(model.params["ai_w"].data)
        center_only[:, :, 1, 1] = model.params["ai_w"].data[:, :, 1, 1]
        e_nchw = e_ai.data.transpose(2, 0, 1)[None]
        fused = conv2d_oracle(e_nchw, center_only, model.params["ai_b"].data, 1, 1)
        x = np.maximum(fused, 0.1 * fused)
        for wn, bn in (("head_conv1_w", "head_conv1_b"), ("head_conv2_w", "head_conv2_b")):
            x = conv2d_oracle(x, model.params[wn].data, model.params[bn].data, 1, 1)
            if wn == "head_conv1_w":
                x = np.maximum(x, 0.1 * x)
        e_x = np.exp(x - x.max(axis=1, keepdims=True))
        q_ref = (e_x / e_x.sum(axis=1, keepdims=True))[0].transpose(1, 2, 0)
        np.testing.assert_allclose(q_ai.data, q_ref, atol=1e-9)


class TestCheckpoint:
    def _model(self, **kw):
        cfg = ModelConfig(S=8, widths=(8, 12, 16), D=4, compress_mid=4, **kw)
        return build(cfg, rng=11)

    def test_round_trip_bit_exact(self, tmp_path):
        from spixel.autodiff import AdamState

        model = self._model()
        adam = AdamState.for_params(model.params)
        adam.step = 42
        adam.m["ai_w"][:] = 0.25
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, model, adam, iteration=42, seed=9)
        ckpt = load_checkpoint(path)
        assert ckpt.iteration == 42
        assert ckpt.seed == 9
        assert ckpt.config == model.config
        for name, p in model.params.items():
            assert np.array_equal(ckpt.params[name], p.data)
        restored = ckpt.build_model()
        for name, p in model.params.items():
            assert np.array_equal(restored.params[name].data, p.data)
        adam2 = ckpt.adam_state(restored)
        assert adam2.step == 42
        assert np.array_equal(adam2.m["ai_w"], adam.m["ai_w"])

    def test_truncated_file_rejected(self, tmp_path):
        model = self._model()
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, model, iteration=0, seed=0)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) - 7])
        with pytest.raises(CheckpointFormatError):
            load_checkpoint(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "m.ckpt"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(CheckpointFormatError):
            load_checkpoint(path)

    def test_config_mismatch_names_first_tensor(self, tmp_path):
        model = self._model()
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, model, iteration=0, seed=0)
        ckpt = load_checkpoint(path)
        other = build(ModelConfig(S=8, widths=(16, 32, 64), D=8, compress_mid=16), rng=0)
        with pytest.raises(CheckpointCompatError) as exc:
            ckpt.restore_into(other)
        assert "enc1_conv1_w" in str(exc.value)
