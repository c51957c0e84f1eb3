"""Parameter containers and the convolutional building blocks of the network"""
import math
from typing import Dict, Iterator, List, Mapping, MutableMapping, Optional, Tuple

import numpy as np

from . import functional as F
from .exceptions import ParameterMismatchError
from .tensor import Tensor

Probes = MutableMapping[str, Optional[Tensor]]


class Module:
    """Named parameters and sub-modules, enumerated in registration order"""

    def __init__(self) -> None:
        self._parameters: Dict[str, Tensor] = {}
        self._modules: Dict[str, "Module"] = {}

    def add_parameter(self, name: str, tensor: Tensor) -> Tensor:
        """Register a trainable tensor"""
        assert name not in self._parameters and "." not in name
        tensor.requires_grad = True
        self._parameters[name] = tensor
        return tensor

    def add_module(self, name: str, module: "Module") -> "Module":
        """Register a child module"""
        assert name not in self._modules and "." not in name
        self._modules[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        """(dotted name, tensor) pairs, own parameters before children"""
        for name, tensor in self._parameters.items():
            yield prefix + name, tensor
        for name, module in self._modules.items():
            yield from module.named_parameters(f"{prefix}{name}.")

    def named_children(self) -> Iterator[Tuple[str, "Module"]]:
        """Direct sub-modules"""
        yield from self._modules.items()

    def parameters(self) -> List[Tensor]:
        """Every parameter in registry order"""
        return [tensor for _, tensor in self.named_parameters()]

    def zero_grad(self) -> None:
        """Reset every parameter gradient"""
        for tensor in self.parameters():
            tensor.zero_grad()

    def state_arrays(self) -> Dict[str, np.ndarray]:
        """Copies of all parameter arrays keyed by registry name"""
        return {name: tensor.data.copy() for name, tensor in self.named_parameters()}

    def load_state_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        """Overwrite parameters from a name -> array mapping that must match the registry"""
        registry = list(self.named_parameters())
        for name, tensor in registry:
            if name not in arrays:
                raise ParameterMismatchError(f"missing tensor '{name}'")
            array = arrays[name]
            if array.shape != tensor.shape:
                raise ParameterMismatchError(
                    f"shape mismatch for '{name}': stored {array.shape}, model {tensor.shape}"
                )
        unexpected = set(arrays) - {name for name, _ in registry}
        if unexpected:
            raise ParameterMismatchError(f"unexpected tensor '{sorted(unexpected)[0]}'")
        for name, tensor in registry:
            tensor.data = np.ascontiguousarray(arrays[name], dtype=tensor.dtype).copy()


def kaiming_uniform(
    shape: Tuple[int, ...], rng: np.random.Generator, negative_slope: float = math.sqrt(5.0)
) -> np.ndarray:
    """Uniform fan-in initialisation with bound gain * sqrt(3 / fan_in).

    The default slope sqrt(5) gives bound 1 / sqrt(fan_in), the usual default for
    convolution layers.
    """
    fan_in = int(np.prod(shape[1:]))
    gain = math.sqrt(2.0 / (1.0 + negative_slope**2))
    bound = gain * math.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv2d(Module):
    """Same-size convolution (stride 1, padding K // 2)"""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        dtype=np.float32,
    ) -> None:
        super().__init__()
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        self.kernel_size = kernel_size
        self.weight = self.add_parameter("weight", Tensor(kaiming_uniform(shape, rng), dtype=dtype))
        self.bias = self.add_parameter("bias", Tensor.zeros((out_channels,), dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, stride=1, padding=self.kernel_size // 2)


class ResidualBlock(Module):
    """conv3x3 -> activation -> conv3x3, plus the identity"""

    def __init__(self, channels: int, activation: str, rng: np.random.Generator, dtype) -> None:
        super().__init__()
        self.activation = activation
        self.conv1 = self.add_module("conv1", Conv2d(channels, channels, 3, rng, dtype))
        self.conv2 = self.add_module("conv2", Conv2d(channels, channels, 3, rng, dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return F.add(x, self.conv2(F.activation(self.conv1(x), self.activation)))


class ResidualGroup(Module):
    """A chain of residual blocks; the i-th block's output is layer i (1-based)"""

    def __init__(
        self,
        label: str,
        channels: int,
        count: int,
        activation: str,
        rng: np.random.Generator,
        dtype,
    ) -> None:
        super().__init__()
        self.label = label
        self.blocks = [
            self.add_module(f"rb{i}", ResidualBlock(channels, activation, rng, dtype))
            for i in range(count)
        ]

    def __call__(self, x: Tensor, probes: Optional[Probes] = None) -> Tensor:
        for layer, block in enumerate(self.blocks, start=1):
            x = block(x)
            if probes is not None:
                key = f"{self.label}/layer{layer}"
                if key in probes:
                    probes[key] = x
        return x
