"""Test AdamW and the learning-rate schedules"""
import math

import numpy as np
import pytest

from msprl.config import TrainConfig
from msprl.exceptions import OptimizerError
from msprl.optim import AdamW, OptimizerState, adamw_step, cosine_lr, learning_rate, linear_lr
from msprl.tensor import Tensor


def _param(values, grad):
    tensor = Tensor(np.asarray(values, dtype=np.float64), requires_grad=True)
    tensor.grad = np.asarray(grad, dtype=np.float64)
    return tensor


def reference_adam(param, grad, m, v, step, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Textbook Adam, written independently of the library"""
    m = beta1 * m + (1 - beta1) * grad
    v = beta2 * v + (1 - beta2) * grad**2
    m_hat = m / (1 - beta1**step)
    v_hat = v / (1 - beta2**step)
    return param - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


def test_cosine_endpoints_and_midpoint():
    """2e-4 at the start, 1e-6 at the end, their mean halfway"""
    cfg = TrainConfig(total_iterations=1000)
    assert cosine_lr(0, cfg) == 2e-4
    assert cosine_lr(1000, cfg) == 1e-6
    assert abs(cosine_lr(500, cfg) - 1.005e-4) <= 1e-15


def test_schedules_never_increase():
    """Both schedules are monotonically non-increasing"""
    cfg = TrainConfig(total_iterations=1000)
    for schedule in (cosine_lr, linear_lr):
        values = [schedule(i, cfg) for i in range(1001)]
        assert all(a >= b for a, b in zip(values, values[1:]))
    assert abs(linear_lr(500, cfg) - 1.005e-4) <= 1e-15


def test_schedule_range_and_dispatch():
    """Iterations outside the schedule are errors; lr_schedule picks the curve"""
    cfg = TrainConfig(total_iterations=10)
    with pytest.raises(OptimizerError):
        cosine_lr(11, cfg)
    with pytest.raises(OptimizerError):
        cosine_lr(-1, cfg)
    assert learning_rate(3, cfg.replace(lr_schedule="linear")) == linear_lr(3, cfg)
    assert cosine_lr(0, TrainConfig(total_iterations=0)) == 2e-4


def test_zero_gradient_is_a_fixed_point():
    """No gradient and no decay leave parameters alone"""
    param = _param([1.0, -2.0], [0.0, 0.0])
    state = OptimizerState.zeros_like([("p", param)])
    adamw_step([("p", param)], state, lr=0.1)
    np.testing.assert_array_equal(param.data, [1.0, -2.0])
    assert state.step == 1


def test_single_step_by_hand():
    """p = 1, g = 1, lr = 0.1 moves to about 0.9"""
    param = _param([1.0], [1.0])
    state = OptimizerState.zeros_like([("p", param)])
    adamw_step([("p", param)], state, lr=0.1)
    assert abs(param.data[0] - 0.9) < 1e-6


def test_matches_reference_adam_without_decay(rng):
    """Several steps agree with an independent Adam"""
    values = rng.normal(size=(3, 4))
    param = _param(values, np.zeros((3, 4)))
    state = OptimizerState.zeros_like([("p", param)])
    expected, m, v = values.copy(), np.zeros((3, 4)), np.zeros((3, 4))
    for step in range(1, 6):
        grad = rng.normal(size=(3, 4))
        param.grad = grad
        adamw_step([("p", param)], state, lr=1e-3)
        expected, m, v = reference_adam(expected, grad, m, v, step, 1e-3)
        assert np.abs(param.data - expected).max() <= 1e-12


def test_decay_is_decoupled():
    """Weight decay shrinks the parameter before the adaptive step"""
    param = _param([2.0], [0.0])
    state = OptimizerState.zeros_like([("p", param)])
    adamw_step([("p", param)], state, lr=0.1, weight_decay=0.5)
    assert math.isclose(param.data[0], 2.0 * (1 - 0.1 * 0.5))


def test_missing_gradient_is_an_error():
    """Every parameter needs a gradient"""
    param = Tensor(np.ones(2), requires_grad=True)
    state = OptimizerState.zeros_like([("p", param)])
    with pytest.raises(OptimizerError, match="'p'"):
        adamw_step([("p", param)], state, lr=0.1)


def test_adamw_binds_config():
    """The wrapper reads betas, eps and decay from the configuration"""
    cfg = TrainConfig(weight_decay=0.0)
    param = _param([1.0], [1.0])
    optimizer = AdamW([("p", param)], cfg)
    optimizer.step(0.1)
    assert abs(param.data[0] - 0.9) < 1e-6
    optimizer.zero_grad()
    assert param.grad is None
