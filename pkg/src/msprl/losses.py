"""Training objective: pixel L1 plus a weighted frequency-domain L1

The frequency term compares real and imaginary parts of the unnormalised DFT
separately. Sides are zero-padded to the next power of two first. Because the
spectra are not divided by H*W, lambda_fft weights the raw spectral magnitudes.
"""
from dataclasses import dataclass

from . import functional as F
from .exceptions import ConfigError, ShapeError
from .fourier import next_power_of_two
from .tensor import Tensor

DEFAULT_LAMBDA_FFT = 0.1


@dataclass(frozen=True)
class LossWeights:
    """Mixing weight of the frequency term"""

    lambda_fft: float = DEFAULT_LAMBDA_FFT

    def __post_init__(self) -> None:
        if not self.lambda_fft >= 0:
            raise ConfigError(f"lambda_fft must be non-negative, got {self.lambda_fft}")


@dataclass
class LossBreakdown:
    """The differentiable total and the values of its two terms"""

    total: Tensor
    l1: float
    fft: float


def _check_pair(y: Tensor, target: Tensor) -> None:
    if y.shape != target.shape:
        raise ShapeError(f"prediction {y.shape} and target {target.shape} differ in shape")


def l1_loss(y: Tensor, target: Tensor) -> Tensor:
    """Mean absolute error over every element"""
    _check_pair(y, target)
    return F.mean(F.absolute(F.sub(y, target)))


def fft_loss(y: Tensor, target: Tensor) -> Tensor:
    """Mean absolute error over the real and imaginary parts of both spectra"""
    _check_pair(y, target)
    height = next_power_of_two(y.shape[2])
    width = next_power_of_two(y.shape[3])
    y_real, y_imag = F.fft2d(F.pad_to(y, height, width))
    t_real, t_imag = F.fft2d(F.pad_to(target, height, width))
    real_term = F.mean(F.absolute(F.sub(y_real, t_real)))
    imag_term = F.mean(F.absolute(F.sub(y_imag, t_imag)))
    return F.scale(F.add(real_term, imag_term), 0.5)


def loss_terms(y: Tensor, target: Tensor, weights: LossWeights = LossWeights()) -> LossBreakdown:
    """l1 + lambda_fft * fft, keeping the term values for logging"""
    pixel = l1_loss(y, target)
    spectral = fft_loss(y, target)
    total = F.add(pixel, F.scale(spectral, weights.lambda_fft))
    return LossBreakdown(total=total, l1=pixel.item(), fft=spectral.item())


def total_loss(y: Tensor, target: Tensor, weights: LossWeights = LossWeights()) -> Tensor:
    """l1_loss + lambda_fft * fft_loss"""
    return loss_terms(y, target, weights).total
