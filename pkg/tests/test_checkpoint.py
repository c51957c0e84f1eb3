"""Test checkpoint encoding, integrity checks and model restoration"""
import struct

import numpy as np
import pytest

from msprl.checkpoint import (
    FORMAT_VERSION,
    MAGIC,
    Checkpoint,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from msprl.config import TrainConfig
from msprl.exceptions import (
    CheckpointError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ChecksumError,
    ParameterMismatchError,
)
from msprl.model import ModelConfig, build_model
from msprl.optim import OptimizerState


@pytest.fixture
def checkpoint(rng):
    """A small model with non-trivial optimizer moments"""
    model = build_model(ModelConfig(base_channels=4, rb_per_block=1))
    params = list(model.named_parameters())
    state = OptimizerState.zeros_like(params)
    for name, tensor in params:
        state.exp_avg[name][...] = rng.normal(size=tensor.shape)
        state.exp_avg_sq[name][...] = rng.random(tensor.shape)
    state.step = 17
    cfg = TrainConfig(total_iterations=40, base_channels=4, rb_per_block=1, seed=3)
    return Checkpoint.capture(model, state, iteration=17, train_config=cfg)


def test_save_load_save_is_byte_identical(checkpoint, tmp_path):
    """Round trips reproduce the file exactly"""
    first = tmp_path / "a.msprl"
    second = tmp_path / "b.msprl"
    save_checkpoint(checkpoint, first)
    loaded = load_checkpoint(first)
    save_checkpoint(loaded, second)
    assert first.read_bytes() == second.read_bytes()
    assert loaded.iteration == 17 and loaded.optimizer.step == 17
    assert loaded.train_config == checkpoint.train_config
    assert loaded.model_config == checkpoint.model_config
    assert loaded.rng_state == {"seed": 3, "next_batch": 17}
    for name, array in checkpoint.parameters.items():
        np.testing.assert_array_equal(loaded.parameters[name], array)
        assert loaded.parameters[name].dtype == array.dtype


def test_header_layout(checkpoint):
    """Magic, version and a trailing CRC-32"""
    data = encode_checkpoint(checkpoint)
    assert data.startswith(MAGIC)
    assert struct.unpack("<I", data[8:12]) == (FORMAT_VERSION,)


def test_tampered_byte_fails_checksum(checkpoint):
    """Changing a payload byte is detected"""
    data = bytearray(encode_checkpoint(checkpoint))
    data[-6] ^= 0xFF
    with pytest.raises(ChecksumError):
        decode_checkpoint(bytes(data))


def test_truncated_file(checkpoint):
    """A file cut short fails its checksum; one without room for a header is truncated"""
    data = encode_checkpoint(checkpoint)
    with pytest.raises(ChecksumError, match="truncated"):
        decode_checkpoint(data[: len(data) // 2])
    with pytest.raises(CheckpointTruncatedError):
        decode_checkpoint(data[:12])


def test_tampered_header_fails_checksum(checkpoint):
    """Damage to the record count is caught before any record is parsed"""
    data = bytearray(encode_checkpoint(checkpoint))
    (meta_len,) = struct.unpack("<I", data[12:16])
    data[16 + meta_len] ^= 0x01
    with pytest.raises(ChecksumError):
        decode_checkpoint(bytes(data))


def test_unknown_version(checkpoint):
    """Other format versions are refused"""
    data = bytearray(encode_checkpoint(checkpoint))
    data[8:12] = struct.pack("<I", FORMAT_VERSION + 1)
    with pytest.raises(CheckpointVersionError):
        decode_checkpoint(bytes(data))


def test_bad_magic():
    """Arbitrary files are not checkpoints"""
    with pytest.raises(CheckpointError):
        decode_checkpoint(b"NOTACKPT" + bytes(16))


def test_build_model_restores_parameters(checkpoint):
    """A rebuilt model carries the stored parameters"""
    model = checkpoint.build_model()
    for name, tensor in model.named_parameters():
        np.testing.assert_array_equal(tensor.data, checkpoint.parameters[name])


def test_mismatched_width_names_head(tmp_path):
    """Loading a C=48 checkpoint into a C=64 model fails at the head conv"""
    path = tmp_path / "wide.msprl"
    save_checkpoint(Checkpoint.capture(build_model(ModelConfig(rb_per_block=1))), path)
    wider = build_model(ModelConfig(base_channels=64, rb_per_block=1))
    with pytest.raises(ParameterMismatchError, match="head.weight"):
        load_checkpoint(path).apply_to(wider)


def test_unexpected_block_is_named(checkpoint):
    """Tensors the model does not have are reported by name"""
    plain = build_model(ModelConfig(base_channels=4, rb_per_block=1, enable_sfe=False))
    with pytest.raises(ParameterMismatchError, match="sfe2"):
        checkpoint.apply_to(plain)
