"""Checkpoint serialization round-trips and corruption handling."""

import numpy as np
import pytest

from cifkd import autodiff as ad
from cifkd.checkpoint import (
    MAGIC,
    CheckpointFormatError,
    load_checkpoint,
    restore_model,
    save_checkpoint,
)
from cifkd.cif import CifConfig
from cifkd.model import AsrModel, ModelConfig


def tiny_model(seed=0):
    cfg = ModelConfig(vocab_size=6, d_model=8, n_heads=2, enc_blocks=1,
                      dec_blocks=1, ffn_mult=1, feat_dim=8, front_channels=2)
    return AsrModel(cfg, CifConfig(), np.random.default_rng(seed))


class TestRoundTrip:
    def test_arrays_bit_identical(self, tmp_path):
        model = tiny_model()
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, model.named_parameters(), "lr = 0.1\n")
        config_text, params = load_checkpoint(path)
        assert config_text == "lr = 0.1\n"
        named = dict(model.named_parameters())
        assert set(params) == set(named)
        for name, tensor in named.items():
            np.testing.assert_array_equal(params[name],
                                          tensor.data.astype(np.float32))

    def test_restore_reproduces_forward(self, tmp_path):
        model = tiny_model(seed=1)
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, model.named_parameters())
        X = np.random.default_rng(2).normal(size=(16, 8))
        with ad.no_grad():
            before = model.encode(ad.tensor(X)).data.copy()
        # Scramble every parameter, then restore.
        for _, p in model.named_parameters():
            p.data = p.data + 1.0
        _, params = load_checkpoint(path)
        restore_model(model, params)
        with ad.no_grad():
            after = model.encode(ad.tensor(X)).data
        np.testing.assert_array_equal(before, after)

    def test_rank_zero_and_plain_arrays(self, tmp_path):
        path = tmp_path / "s.ckpt"
        save_checkpoint(path, [("scale", np.float32(2.5)),
                               ("table", np.arange(6, dtype=np.float32).reshape(2, 3))])
        _, params = load_checkpoint(path)
        assert params["scale"].shape == ()
        assert params["scale"] == np.float32(2.5)
        np.testing.assert_array_equal(params["table"],
                                      np.arange(6, dtype=np.float32).reshape(2, 3))

    def test_empty_config_echo(self, tmp_path):
        path = tmp_path / "e.ckpt"
        save_checkpoint(path, [("x", np.zeros(2, dtype=np.float32))])
        config_text, _ = load_checkpoint(path)
        assert config_text == ""


class TestCorruption:
    def write_one(self, tmp_path):
        path = tmp_path / "c.ckpt"
        save_checkpoint(path, [("x", np.ones(3, dtype=np.float32))], "a = 1")
        return path

    def test_bad_magic(self, tmp_path):
        path = self.write_one(tmp_path)
        raw = bytearray(path.read_bytes())
        raw[:8] = b"XXXXXXXX"
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointFormatError, match="magic"):
            load_checkpoint(path)

    def test_bad_version(self, tmp_path):
        path = self.write_one(tmp_path)
        raw = bytearray(path.read_bytes())
        raw[8] = 7
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointFormatError, match="version"):
            load_checkpoint(path)

    def test_truncated(self, tmp_path):
        path = self.write_one(tmp_path)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(CheckpointFormatError, match="truncated"):
            load_checkpoint(path)

    def test_trailing_bytes(self, tmp_path):
        path = self.write_one(tmp_path)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(CheckpointFormatError, match="trailing"):
            load_checkpoint(path)

    def test_magic_constant_is_eight_bytes(self):
        assert len(MAGIC) == 8


class TestRestoreValidation:
    def test_missing_parameter(self, tmp_path):
        model = tiny_model()
        named = model.named_parameters()[:-1]
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, named)
        _, params = load_checkpoint(path)
        with pytest.raises(CheckpointFormatError, match="missing"):
            restore_model(model, params)

    def test_extra_parameter(self, tmp_path):
        model = tiny_model()
        named = model.named_parameters() + [("ghost", np.zeros(2, np.float32))]
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, named)
        _, params = load_checkpoint(path)
        with pytest.raises(CheckpointFormatError, match="extra"):
            restore_model(model, params)

    def test_shape_mismatch(self, tmp_path):
        model = tiny_model()
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, model.named_parameters())
        _, params = load_checkpoint(path)
        first = model.named_parameters()[0][0]
        params = dict(params)
        params[first] = np.zeros((1, 1), dtype=np.float32)
        with pytest.raises(CheckpointFormatError, match="shape mismatch"):
            restore_model(model, params)
