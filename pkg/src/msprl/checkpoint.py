"""Versioned binary checkpoints

Layout, all integers little-endian:

    magic       8 bytes  b"MSPRLCKP"
    version     u32
    meta_len    u32, then meta_len bytes of UTF-8 JSON (sorted keys):
                model_config, train_config, iteration, optimizer_step, rng_state
    count       u32, then `count` tensor records:
                name_len u16, name (UTF-8), dtype tag u8 (1 = float32, 2 = float64),
                rank u8, rank x u32 extents, row-major little-endian payload
    crc32       u32 over every preceding byte

Record names are `param/<registry name>`, `adam_m/<registry name>` and
`adam_v/<registry name>`, each group in registry order. Encoding is
deterministic, so load followed by save reproduces the file byte for byte.
Decoding checks the magic and the version, then the CRC over the whole body,
and only then parses records, so any damaged byte past the version field is
reported as a checksum failure.
"""
import json
import logging
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .config import TrainConfig
from .exceptions import (
    CheckpointError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ChecksumError,
)
from .layers import Module
from .model import ModelConfig, MsprlModel, build_model
from .optim import OptimizerState
from .utils import PathLike, atomic_write_bytes

logger = logging.getLogger(__name__)

MAGIC = b"MSPRLCKP"
FORMAT_VERSION = 1

DTYPE_TAGS = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}
TAG_DTYPES = {tag: dtype.newbyteorder("<") for dtype, tag in DTYPE_TAGS.items()}

PARAM_PREFIX = "param/"
EXP_AVG_PREFIX = "adam_m/"
EXP_AVG_SQ_PREFIX = "adam_v/"


@dataclass
class Checkpoint:
    """Everything needed to rebuild a model and continue its training"""

    model_config: ModelConfig
    parameters: Dict[str, np.ndarray]
    optimizer: OptimizerState = field(default_factory=OptimizerState)
    iteration: int = 0
    train_config: Optional[TrainConfig] = None
    version: int = FORMAT_VERSION

    @property
    def rng_state(self) -> Dict[str, int]:
        """Position of the batch stream: batch `next_batch` of the run seeded `seed`"""
        seed = self.train_config.seed if self.train_config is not None else self.model_config.seed
        return {"seed": seed, "next_batch": self.iteration}

    @classmethod
    def capture(
        cls,
        model: MsprlModel,
        optimizer: Optional[OptimizerState] = None,
        iteration: int = 0,
        train_config: Optional[TrainConfig] = None,
    ) -> "Checkpoint":
        """Snapshot (copy) the model parameters and optimizer moments"""
        if optimizer is None:
            optimizer = OptimizerState.zeros_like(list(model.named_parameters()))
        return cls(
            model_config=model.config,
            parameters=model.state_arrays(),
            optimizer=OptimizerState(
                exp_avg={name: array.copy() for name, array in optimizer.exp_avg.items()},
                exp_avg_sq={name: array.copy() for name, array in optimizer.exp_avg_sq.items()},
                step=optimizer.step,
            ),
            iteration=iteration,
            train_config=train_config,
        )

    def apply_to(self, model: Module) -> None:
        """Overwrite `model` parameters; names and shapes must match its registry"""
        model.load_state_arrays(self.parameters)

    def build_model(self) -> MsprlModel:
        """A fresh model with this checkpoint's configuration and parameters"""
        model = build_model(self.model_config)
        self.apply_to(model)
        return model


def _pack_record(name: str, array: np.ndarray) -> bytes:
    if array.dtype not in DTYPE_TAGS:
        raise CheckpointError(f"tensor '{name}' has unsupported dtype {array.dtype}")
    encoded_name = name.encode("utf-8")
    header = struct.pack("<H", len(encoded_name)) + encoded_name
    header += struct.pack("<BB", DTYPE_TAGS[array.dtype], array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    payload = np.ascontiguousarray(array, dtype=array.dtype.newbyteorder("<")).tobytes()
    return header + payload


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    """Serialise to the documented byte layout"""
    meta = {
        "model_config": ckpt.model_config.to_dict(),
        "train_config": ckpt.train_config.to_dict() if ckpt.train_config is not None else None,
        "iteration": ckpt.iteration,
        "optimizer_step": ckpt.optimizer.step,
        "rng_state": ckpt.rng_state,
    }
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")

    records: List[Tuple[str, np.ndarray]] = []
    records += [(PARAM_PREFIX + name, array) for name, array in ckpt.parameters.items()]
    records += [(EXP_AVG_PREFIX + name, array) for name, array in ckpt.optimizer.exp_avg.items()]
    records += [
        (EXP_AVG_SQ_PREFIX + name, array) for name, array in ckpt.optimizer.exp_avg_sq.items()
    ]

    parts = [MAGIC, struct.pack("<I", ckpt.version), struct.pack("<I", len(meta_bytes)), meta_bytes]
    parts.append(struct.pack("<I", len(records)))
    parts += [_pack_record(name, array) for name, array in records]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    """Bounded cursor over the checksummed body"""

    def __init__(self, data: bytes, end: int) -> None:
        self.data = data
        self.end = end
        self.pos = 0

    def take(self, count: int) -> bytes:
        if self.pos + count > self.end:
            raise CheckpointTruncatedError(
                f"checkpoint ends at byte {self.end}, needed {self.pos + count}"
            )
        chunk = self.data[self.pos : self.pos + count]
        self.pos += count
        return chunk

    def unpack(self, fmt: str) -> Tuple[Any, ...]:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(data: bytes) -> Checkpoint:
    """Parse bytes produced by encode_checkpoint"""
    if len(data) < len(MAGIC) + 8:
        raise CheckpointTruncatedError(f"checkpoint too short ({len(data)} bytes)")
    if not data.startswith(MAGIC):
        raise CheckpointError("not a checkpoint file (bad magic)")
    reader = _Reader(data, len(data) - 4)
    reader.take(len(MAGIC))
    (version,) = reader.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint format version {version} is not supported (expected {FORMAT_VERSION})"
        )
    (stored_crc,) = struct.unpack("<I", data[-4:])
    actual_crc = zlib.crc32(data[:-4])
    if stored_crc != actual_crc:
        raise ChecksumError(
            f"checksum mismatch: stored {stored_crc:08x}, computed {actual_crc:08x} "
            "(corrupted or truncated file)"
        )

    (meta_len,) = reader.unpack("<I")
    meta_bytes = reader.take(meta_len)
    (count,) = reader.unpack("<I")
    raw_records: List[Tuple[str, int, Tuple[int, ...], bytes]] = []
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8", errors="replace")
        tag, rank = reader.unpack("<BB")
        if tag not in TAG_DTYPES:
            raise CheckpointError(f"tensor '{name}' has unknown dtype tag {tag}")
        shape = reader.unpack(f"<{rank}I")
        nbytes = int(np.prod(shape, dtype=np.int64)) * TAG_DTYPES[tag].itemsize
        raw_records.append((name, tag, shape, reader.take(nbytes)))

    if reader.pos != reader.end:
        raise CheckpointError(f"{reader.end - reader.pos} unexpected trailing byte(s)")

    meta = json.loads(meta_bytes.decode("utf-8"))
    groups: Dict[str, Dict[str, np.ndarray]] = {
        PARAM_PREFIX: {},
        EXP_AVG_PREFIX: {},
        EXP_AVG_SQ_PREFIX: {},
    }
    for name, tag, shape, payload in raw_records:
        prefix = next((prefix for prefix in groups if name.startswith(prefix)), None)
        if prefix is None:
            raise CheckpointError(f"record '{name}' has no known group prefix")
        array = np.frombuffer(payload, dtype=TAG_DTYPES[tag]).reshape(shape)
        groups[prefix][name[len(prefix) :]] = array.astype(TAG_DTYPES[tag].newbyteorder("="))

    train_config = meta.get("train_config")
    return Checkpoint(
        model_config=ModelConfig.from_dict(meta["model_config"]),
        parameters=groups[PARAM_PREFIX],
        optimizer=OptimizerState(
            exp_avg=groups[EXP_AVG_PREFIX],
            exp_avg_sq=groups[EXP_AVG_SQ_PREFIX],
            step=int(meta["optimizer_step"]),
        ),
        iteration=int(meta["iteration"]),
        train_config=TrainConfig.from_dict(train_config) if train_config is not None else None,
        version=version,
    )


def save_checkpoint(ckpt: Checkpoint, path: PathLike) -> None:
    """Write atomically: a temporary sibling file renamed over `path`"""
    atomic_write_bytes(path, encode_checkpoint(ckpt))
    logger.debug("saved checkpoint at iteration %d to %s", ckpt.iteration, path)


def load_checkpoint(path: PathLike) -> Checkpoint:
    """Read and verify a checkpoint file"""
    return decode_checkpoint(Path(path).read_bytes())
