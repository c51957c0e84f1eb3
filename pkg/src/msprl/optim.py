"""AdamW with decoupled weight decay and the learning-rate schedules"""
import math
from dataclasses import dataclass, field
from typing import Dict, Sequence, Tuple

import numpy as np

from .config import TrainConfig
from .exceptions import OptimizerError
from .tensor import Tensor

NamedParameters = Sequence[Tuple[str, Tensor]]


@dataclass
class OptimizerState:
    """First and second moment buffers per parameter name, plus the step counter"""

    exp_avg: Dict[str, np.ndarray] = field(default_factory=dict)
    exp_avg_sq: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros_like(cls, params: NamedParameters) -> "OptimizerState":
        """Fresh state with zero moments shaped like `params`"""
        return cls(
            exp_avg={name: np.zeros_like(tensor.data) for name, tensor in params},
            exp_avg_sq={name: np.zeros_like(tensor.data) for name, tensor in params},
        )

    def check_matches(self, params: NamedParameters) -> None:
        """Every parameter has moment buffers of its own shape"""
        for name, tensor in params:
            for buffers in (self.exp_avg, self.exp_avg_sq):
                if name not in buffers:
                    raise OptimizerError(f"no moment buffer for parameter '{name}'")
                if buffers[name].shape != tensor.shape:
                    raise OptimizerError(
                        f"moment buffer of '{name}' has shape {buffers[name].shape}, "
                        f"parameter has {tensor.shape}"
                    )


def adamw_step(
    params: NamedParameters,
    state: OptimizerState,
    lr: float,
    betas: Tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> None:
    """One in-place AdamW update from the gradients stored on `params`.

    The decay p -= lr * weight_decay * p is applied first and apart from the
    bias-corrected adaptive step.
    """
    missing = [name for name, tensor in params if tensor.grad is None]
    if missing:
        raise OptimizerError(f"{len(missing)} parameter(s) have no gradient, first '{missing[0]}'")
    state.check_matches(params)

    beta1, beta2 = betas
    state.step += 1
    correction1 = 1.0 - beta1**state.step
    correction2 = 1.0 - beta2**state.step
    for name, tensor in params:
        grad = tensor.grad
        assert grad is not None
        exp_avg = state.exp_avg[name]
        exp_avg_sq = state.exp_avg_sq[name]
        if weight_decay:
            tensor.data *= 1.0 - lr * weight_decay
        exp_avg *= beta1
        exp_avg += (1.0 - beta1) * grad
        exp_avg_sq *= beta2
        exp_avg_sq += (1.0 - beta2) * grad * grad
        denominator = np.sqrt(exp_avg_sq / correction2) + eps
        tensor.data -= lr * (exp_avg / correction1) / denominator


def _progress(iteration: int, cfg: TrainConfig) -> float:
    if not 0 <= iteration <= cfg.total_iterations:
        raise OptimizerError(
            f"iteration {iteration} outside the schedule [0, {cfg.total_iterations}]"
        )
    if cfg.total_iterations == 0:
        return 0.0
    return iteration / cfg.total_iterations


def cosine_lr(iteration: int, cfg: TrainConfig) -> float:
    """Single-cycle cosine decay from lr_start to lr_end"""
    weight = 0.5 * (1.0 + math.cos(math.pi * _progress(iteration, cfg)))
    return cfg.lr_start * weight + cfg.lr_end * (1.0 - weight)


def linear_lr(iteration: int, cfg: TrainConfig) -> float:
    """Straight-line decay from lr_start to lr_end"""
    weight = 1.0 - _progress(iteration, cfg)
    return cfg.lr_start * weight + cfg.lr_end * (1.0 - weight)


SCHEDULES = {"cosine": cosine_lr, "linear": linear_lr}


def learning_rate(iteration: int, cfg: TrainConfig) -> float:
    """Learning rate of the configured schedule"""
    return SCHEDULES[cfg.lr_schedule](iteration, cfg)


class AdamW:
    """Binds parameters and their state to the hyper-parameters of a TrainConfig"""

    def __init__(self, params: NamedParameters, cfg: TrainConfig) -> None:
        self.params = list(params)
        self.cfg = cfg
        self.state = OptimizerState.zeros_like(self.params)

    def step(self, lr: float) -> None:
        """Apply one update"""
        adamw_step(
            self.params,
            self.state,
            lr,
            betas=self.cfg.betas,
            eps=self.cfg.eps,
            weight_decay=self.cfg.weight_decay,
        )

    def zero_grad(self) -> None:
        """Reset the gradients of every bound parameter"""
        for _, tensor in self.params:
            tensor.zero_grad()
