"""The multiscale progressively residual restoration network

Three levels with C, 2C and 4C channels. The encoder runs the head conv and
EB1 at full resolution; each lower level takes the previous encoder output
through pixel-unshuffle + 1x1 conv, optionally fuses it with the bilinearly
downscaled input (SFE), and refines it with its EB. The decoder walks back up:
1x1 conv + pixel-shuffle, optional fusion with the same-level encoder features
(FF), then a DB. A final 3x3 conv predicts a residual that is added to the
input. Level 3 has no DB; EB3 feeds the first upsampler directly.

Registry names (and therefore checkpoint layouts) follow registration order:
head, eb1, down1, sfe2, eb2, down2, sfe3, eb3, up3, ff2, db2, up2, ff1, db1, tail.
"""
import logging
from collections import OrderedDict
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Union

import numpy as np

from . import functional as F
from .exceptions import ConfigError, SelectorError, ShapeError
from .functional import ACTIVATIONS
from .image import GrayImage, normalize_min_max
from .layers import Conv2d, Module, Probes, ResidualGroup
from .selector import LayerSelector, parse_selector
from .tensor import Tensor, no_grad

logger = logging.getLogger(__name__)

PRECISIONS = {"float32": np.float32, "float64": np.float64}


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyper-parameters"""

    base_channels: int = 48
    rb_per_block: int = 8
    levels: int = 3
    activation: str = "relu"
    enable_sfe: bool = True
    enable_ff: bool = True
    seed: int = 0
    precision: str = "float32"

    def __post_init__(self) -> None:
        if self.base_channels < 1:
            raise ConfigError(f"base_channels must be at least 1, got {self.base_channels}")
        if self.rb_per_block < 1:
            raise ConfigError(f"rb_per_block must be at least 1, got {self.rb_per_block}")
        if self.levels != 3:
            raise ConfigError(f"only 3 levels are supported, got {self.levels}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}, got '{self.activation}'")
        if self.precision not in PRECISIONS:
            raise ConfigError(f"precision must be one of {tuple(PRECISIONS)}")

    @property
    def dtype(self):
        return PRECISIONS[self.precision]

    def level_channels(self) -> List[int]:
        """Feature widths of levels 1..3"""
        return [self.base_channels * 2**level for level in range(self.levels)]

    def to_dict(self) -> Dict[str, Any]:
        """JSON-compatible field mapping"""
        return asdict(self)

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "ModelConfig":
        """Inverse of to_dict"""
        return cls(**values)


class Downsample(Module):
    """pixel-unshuffle(2) then 1x1 conv 4C -> 2C"""

    def __init__(self, channels: int, rng: np.random.Generator, dtype) -> None:
        super().__init__()
        self.conv = self.add_module("conv", Conv2d(4 * channels, 2 * channels, 1, rng, dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return self.conv(F.pixel_unshuffle(x, 2))


class Upsample(Module):
    """1x1 conv C -> 2C then pixel-shuffle(2), halving the width"""

    def __init__(self, channels: int, rng: np.random.Generator, dtype) -> None:
        super().__init__()
        self.conv = self.add_module("conv", Conv2d(channels, 2 * channels, 1, rng, dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return F.pixel_shuffle(self.conv(x), 2)


class ShallowFeatureExtraction(Module):
    """Attention between the downscaled input image and the downsampled encoder stream.

    att = stack(x_resized) * enc_down, out = 1x1conv(concat(x_resized, att)) + enc_down,
    where stack is 3x3 conv -> act -> 1x1 conv -> act -> 1x1 conv, all of the
    target width.
    """

    def __init__(self, channels: int, activation: str, rng: np.random.Generator, dtype) -> None:
        super().__init__()
        self.channels = channels
        self.activation = activation
        self.stack0 = self.add_module("stack0", Conv2d(1, channels, 3, rng, dtype))
        self.stack1 = self.add_module("stack1", Conv2d(channels, channels, 1, rng, dtype))
        self.stack2 = self.add_module("stack2", Conv2d(channels, channels, 1, rng, dtype))
        self.fuse = self.add_module("fuse", Conv2d(channels + 1, channels, 1, rng, dtype))

    def conv_stack(self, x_resized: Tensor) -> Tensor:
        """Low-level features of the downscaled image"""
        features = F.activation(self.stack0(x_resized), self.activation)
        features = F.activation(self.stack1(features), self.activation)
        return self.stack2(features)

    def __call__(self, x_resized: Tensor, enc_down: Tensor) -> Tensor:
        if x_resized.shape[2:] != enc_down.shape[2:]:
            raise ShapeError(f"SFE inputs differ in size: {x_resized.shape} vs {enc_down.shape}")
        attention = F.mul(self.conv_stack(x_resized), enc_down)
        return F.add(self.fuse(F.concat_channels(x_resized, attention)), enc_down)


class FeatureFusion(Module):
    """1x1 conv over concat(encoder features, upsampled deeper features), 2C' -> C'"""

    def __init__(self, channels: int, rng: np.random.Generator, dtype) -> None:
        super().__init__()
        self.conv = self.add_module("conv", Conv2d(2 * channels, channels, 1, rng, dtype))

    def __call__(self, ebk: Tensor, upper_up: Tensor) -> Tensor:
        if ebk.shape != upper_up.shape:
            raise ShapeError(f"FF inputs differ: {ebk.shape} vs {upper_up.shape}")
        return self.conv(F.concat_channels(ebk, upper_up))


class MsprlModel(Module):
    """Instantiated network with its parameter registry"""

    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        self.config = config
        rng = np.random.default_rng(config.seed)
        dtype = config.dtype
        act = config.activation
        c1, c2, c3 = config.level_channels()
        count = config.rb_per_block

        self.head = self.add_module("head", Conv2d(1, c1, 3, rng, dtype))
        self.eb1 = self.add_module("eb1", ResidualGroup("EB1", c1, count, act, rng, dtype))
        self.down1 = self.add_module("down1", Downsample(c1, rng, dtype))
        self.sfe2: Optional[ShallowFeatureExtraction] = None
        if config.enable_sfe:
            self.sfe2 = self.add_module("sfe2", ShallowFeatureExtraction(c2, act, rng, dtype))
        self.eb2 = self.add_module("eb2", ResidualGroup("EB2", c2, count, act, rng, dtype))
        self.down2 = self.add_module("down2", Downsample(c2, rng, dtype))
        self.sfe3: Optional[ShallowFeatureExtraction] = None
        if config.enable_sfe:
            self.sfe3 = self.add_module("sfe3", ShallowFeatureExtraction(c3, act, rng, dtype))
        self.eb3 = self.add_module("eb3", ResidualGroup("EB3", c3, count, act, rng, dtype))
        self.up3 = self.add_module("up3", Upsample(c3, rng, dtype))
        self.ff2: Optional[FeatureFusion] = None
        if config.enable_ff:
            self.ff2 = self.add_module("ff2", FeatureFusion(c2, rng, dtype))
        self.db2 = self.add_module("db2", ResidualGroup("DB2", c2, count, act, rng, dtype))
        self.up2 = self.add_module("up2", Upsample(c2, rng, dtype))
        self.ff1: Optional[FeatureFusion] = None
        if config.enable_ff:
            self.ff1 = self.add_module("ff1", FeatureFusion(c1, rng, dtype))
        self.db1 = self.add_module("db1", ResidualGroup("DB1", c1, count, act, rng, dtype))
        self.tail = self.add_module("tail", Conv2d(c1, 1, 3, rng, dtype))

    @property
    def block_labels(self) -> List[str]:
        return ["EB1", "EB2", "EB3", "DB1", "DB2"]

    def __call__(self, x: Tensor, probes: Optional[Probes] = None) -> Tensor:
        return self.forward(x, probes)

    def forward(self, x: Tensor, probes: Optional[Probes] = None) -> Tensor:
        """Restore N x 1 x H x W halftones; the output is not clamped.

        Entries of `probes` keyed `EBk/layerN` or `DBk/layerN` are filled with the
        corresponding intermediate activations.
        """
        if x.ndim != 4 or x.shape[1] != 1:
            raise ShapeError(f"expected an N x 1 x H x W input, got {x.shape}")
        height, width = x.shape[2:]
        if height % 4 or width % 4:
            raise ShapeError(f"input size {height}x{width} is not divisible by 4")

        enc1 = self.eb1(self.head(x), probes)

        stream = self.down1(enc1)
        if self.sfe2 is not None:
            stream = self.sfe2(F.bilinear_resize(x, height // 2, width // 2), stream)
        enc2 = self.eb2(stream, probes)

        stream = self.down2(enc2)
        if self.sfe3 is not None:
            stream = self.sfe3(F.bilinear_resize(x, height // 4, width // 4), stream)
        enc3 = self.eb3(stream, probes)

        stream = self.up3(enc3)
        if self.ff2 is not None:
            stream = self.ff2(enc2, stream)
        dec2 = self.db2(stream, probes)

        stream = self.up2(dec2)
        if self.ff1 is not None:
            stream = self.ff1(enc1, stream)
        dec1 = self.db1(stream, probes)

        return F.add(self.tail(dec1), x)


def build_model(config: ModelConfig) -> MsprlModel:
    """Instantiate and initialise a network deterministically from `config.seed`"""
    model = MsprlModel(config)
    logger.debug("built model with %d parameters", count_parameters(model))
    return model


def count_parameters(model: Module) -> int:
    """Number of scalar parameters"""
    return sum(tensor.size for tensor in model.parameters())


def parameter_breakdown(model: Module) -> "OrderedDict[str, int]":
    """Parameter count per top-level block, in registry order"""
    breakdown: "OrderedDict[str, int]" = OrderedDict()
    for name, module in model.named_children():
        breakdown[name] = count_parameters(module)
    return breakdown


def dump_feature_maps(
    model: MsprlModel, x: Tensor, selector: Union[str, LayerSelector]
) -> List[GrayImage]:
    """Min-max normalised renderings of every channel of one activation (first batch item)"""
    if isinstance(selector, str):
        selector = parse_selector(selector)
    if selector.block not in model.block_labels:
        raise SelectorError(
            f"unknown block '{selector.block}', expected one of {model.block_labels}"
        )
    layer = selector.layer if selector.layer is not None else model.config.rb_per_block
    if not 1 <= layer <= model.config.rb_per_block:
        raise SelectorError(
            f"{selector.block} has layers 1..{model.config.rb_per_block}, got layer {layer}"
        )
    key = f"{selector.block}/layer{layer}"
    probes: Dict[str, Optional[Tensor]] = {key: None}
    with no_grad():
        model.forward(x, probes)
    activation = probes[key]
    assert activation is not None
    return [normalize_min_max(channel) for channel in activation.data[0]]
