"""Test the training objective"""
import numpy as np
import pytest

from msprl.exceptions import ConfigError, ShapeError
from msprl.fourier import naive_dft2
from msprl.losses import LossWeights, fft_loss, l1_loss, loss_terms, total_loss
from msprl.tensor import Tensor


def _pair(rng, shape=(2, 1, 6, 5)):
    y = Tensor(rng.random(shape), dtype=np.float64)
    t = Tensor(rng.random(shape), dtype=np.float64)
    return y, t


def test_identical_tensors_cost_nothing(rng):
    """Every loss is zero on identical inputs, padding included"""
    y, _ = _pair(rng)
    same = Tensor(y.data, dtype=np.float64)
    assert l1_loss(y, same).item() == 0.0
    assert fft_loss(y, same).item() == 0.0
    assert total_loss(y, same).item() == 0.0


def test_l1_constant_offset():
    """A uniform offset of 0.5 costs 0.5"""
    t = Tensor(np.zeros((1, 1, 4, 4)), dtype=np.float64)
    y = Tensor(np.full((1, 1, 4, 4), 0.5), dtype=np.float64)
    assert l1_loss(y, t).item() == 0.5


def test_l1_matches_scalar_loop(rng):
    """Mean absolute error by hand"""
    y, t = _pair(rng)
    expected = 0.0
    for a, b in zip(y.data.reshape(-1), t.data.reshape(-1)):
        expected += abs(a - b)
    expected /= y.size
    assert abs(l1_loss(y, t).item() - expected) <= 1e-10


def test_fft_loss_matches_naive_spectra(rng):
    """Zero-pad to 8 x 8, transform naively, average |re| and |im| differences"""
    y, t = _pair(rng)
    padded_y = np.zeros((2, 1, 8, 8))
    padded_t = np.zeros((2, 1, 8, 8))
    padded_y[:, :, :6, :5] = y.data
    padded_t[:, :, :6, :5] = t.data
    diff = naive_dft2(padded_y) - naive_dft2(padded_t)
    expected = np.concatenate([np.abs(diff.real).ravel(), np.abs(diff.imag).ravel()]).mean()
    assert abs(fft_loss(y, t).item() - expected) <= 1e-10


def test_fft_loss_on_doubled_constant():
    """y = 2 t on a constant image only differs at DC"""
    t = Tensor(np.full((1, 1, 4, 4), 0.25), dtype=np.float64)
    y = Tensor(np.full((1, 1, 4, 4), 0.5), dtype=np.float64)
    # DC difference is 16 * 0.25 = 4 over 2 * 16 spectral values
    assert abs(fft_loss(y, t).item() - 4.0 / 32.0) <= 1e-12


def test_fft_loss_is_homogeneous(rng):
    """Scaling both inputs scales the loss"""
    y, t = _pair(rng)
    scaled = fft_loss(Tensor(3.0 * y.data), Tensor(3.0 * t.data)).item()
    assert abs(scaled - 3.0 * fft_loss(y, t).item()) <= 1e-9 * scaled


def test_total_loss_decomposes(rng):
    """Default weighting is l1 + 0.1 fft"""
    y, t = _pair(rng)
    expected = l1_loss(y, t).item() + 0.1 * fft_loss(y, t).item()
    assert abs(total_loss(y, t).item() - expected) <= 1e-12
    terms = loss_terms(y, t)
    assert terms.l1 == l1_loss(y, t).item() and terms.fft == fft_loss(y, t).item()


def test_l1_only_weighting_is_exact(rng):
    """lambda_fft = 0 reproduces the pixel loss bit for bit"""
    y, t = _pair(rng)
    assert total_loss(y, t, LossWeights(0.0)).item() == l1_loss(y, t).item()


def test_total_loss_gradient(rng, grad_check):
    """The combined loss differentiates through the transform"""
    t = Tensor(rng.random((1, 1, 3, 4)), dtype=np.float64)
    for _ in range(20):
        grad_check(lambda xs: total_loss(xs[0], t), [rng.random((1, 1, 3, 4))])


def test_shape_mismatch_and_negative_weight(rng):
    """Inputs must agree; weights must be non-negative"""
    y = Tensor(np.zeros((1, 1, 4, 4)))
    with pytest.raises(ShapeError):
        l1_loss(y, Tensor(np.zeros((1, 1, 4, 8))))
    with pytest.raises(ShapeError):
        fft_loss(y, Tensor(np.zeros((1, 1, 8, 4))))
    with pytest.raises(ConfigError):
        LossWeights(-0.1)
