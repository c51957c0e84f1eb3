"""
Utility functions shared by the pipeline stages
"""
import os
import tempfile
from pathlib import Path
from typing import Tuple, Union

import numpy as np

PathLike = Union[str, os.PathLike]


def atomic_write_bytes(path: PathLike, payload: bytes) -> None:
    """Write `payload` to a sibling temp file, then rename it over `path`"""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    handle, temp_name = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    try:
        with os.fdopen(handle, "wb") as temp_file:
            temp_file.write(payload)
            temp_file.flush()
            os.fsync(temp_file.fileno())
        os.replace(temp_name, target)
    except BaseException:
        if os.path.exists(temp_name):
            os.unlink(temp_name)
        raise


def atomic_write_text(path: PathLike, text: str) -> None:
    """Text variant of atomic_write_bytes, UTF-8 encoded"""
    atomic_write_bytes(path, text.encode("utf-8"))


def center_crop_box(height: int, width: int, multiple: int) -> Tuple[int, int, int, int]:
    """(top, left, new_height, new_width) of the largest centred crop divisible by `multiple`"""
    new_height = height - height % multiple
    new_width = width - width % multiple
    return (height - new_height) // 2, (width - new_width) // 2, new_height, new_width


def batch_rng(seed: int, index: int) -> np.random.Generator:
    """Independent random stream for batch `index` of a run seeded with `seed`"""
    return np.random.default_rng([seed, index])
