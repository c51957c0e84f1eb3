"""Test configuration for the project."""
from pathlib import Path
from typing import Callable, List, Sequence

import numpy as np
import pytest
from lark import Lark

from msprl.dataset import Dataset
from msprl.image import GrayImage, save_image
from msprl.model import ModelConfig
from msprl.tensor import Tensor

GradCheck = Callable[..., None]


@pytest.fixture(scope="module")
def config_grammar() -> Lark:
    """Load the training configuration grammar and return a parser"""
    with open("src/msprl/resources/train_config.lark", encoding="utf-8") as grammar_file:
        grammar = grammar_file.read()
    return Lark(grammar, parser="lalr")


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded random generator"""
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config() -> ModelConfig:
    """Smallest useful architecture, in double precision"""
    return ModelConfig(base_channels=4, rb_per_block=1, precision="float64")


def smooth_image(rng: np.random.Generator, height: int, width: int) -> GrayImage:
    """Random low-frequency image with values in [0, 1]"""
    rows = np.linspace(0.0, np.pi * rng.uniform(1.0, 3.0), height)[:, None]
    cols = np.linspace(0.0, np.pi * rng.uniform(1.0, 3.0), width)[None, :]
    phase = rng.uniform(0.0, 2.0 * np.pi)
    pixels = 0.5 + 0.35 * np.sin(rows + phase) * np.cos(cols - phase)
    return GrayImage(np.round(pixels * 255.0) / 255.0)


@pytest.fixture
def make_corpus(tmp_path: Path) -> Callable[..., Path]:
    """Write `count` smooth PGM images into a fresh directory"""

    def build(count: int, height: int, width: int, name: str = "corpus", seed: int = 7) -> Path:
        root = tmp_path / name
        generator = np.random.default_rng(seed)
        for index in range(count):
            save_image(smooth_image(generator, height, width), root / f"img{index:03d}.pgm")
        return root

    return build


@pytest.fixture
def make_dataset(rng: np.random.Generator) -> Callable[..., Dataset]:
    """In-memory dataset of `count` smooth images"""

    def build(count: int, height: int, width: int) -> Dataset:
        return Dataset([smooth_image(rng, height, width) for _ in range(count)])

    return build


@pytest.fixture
def small_dataset(rng: np.random.Generator) -> Dataset:
    """Eight in-memory 32 x 32 images"""
    return Dataset([smooth_image(rng, 32, 32) for _ in range(8)])


def numeric_gradient(
    loss: Callable[[Sequence[Tensor]], float], inputs: List[Tensor], index: int, step: float
) -> np.ndarray:
    """Central finite differences of `loss` with respect to inputs[index]"""
    target = inputs[index]
    grad = np.zeros_like(target.data)
    flat = target.data.reshape(-1)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + step
        upper = loss(inputs)
        flat[i] = saved - step
        lower = loss(inputs)
        flat[i] = saved
        grad.reshape(-1)[i] = (upper - lower) / (2.0 * step)
    return grad


@pytest.fixture
def grad_check() -> GradCheck:
    """Compare analytic and central-difference gradients of a scalar function"""

    def check(
        build: Callable[[Sequence[Tensor]], Tensor],
        arrays: Sequence[np.ndarray],
        step: float = 1e-6,
        tolerance: float = 1e-4,
    ) -> None:
        inputs = [Tensor(array, requires_grad=True, dtype=np.float64) for array in arrays]
        build(inputs).backward()
        for index, tensor in enumerate(inputs):
            expected = numeric_gradient(lambda xs: build(xs).item(), inputs, index, step)
            assert tensor.grad is not None
            scale = max(np.abs(expected).max(), np.abs(tensor.grad).max(), 1e-8)
            error = np.abs(tensor.grad - expected).max() / scale
            assert error <= tolerance, f"input {index}: relative error {error:.2e}"

    return check
