"""Two-dimensional discrete Fourier transforms on numpy arrays

Both transforms are unnormalised forward DFTs over the last two axes:
X[u, v] = sum_{y, x} f[y, x] * exp(-2*pi*i*(u*y/H + v*x/W)).
"""
import numpy as np


def is_power_of_two(n: int) -> bool:
    """True for 1, 2, 4, 8, ..."""
    return n > 0 and n & (n - 1) == 0


def next_power_of_two(n: int) -> int:
    """Smallest power of two not below n"""
    if n < 1:
        raise ValueError(f"extent must be positive, got {n}")
    return 1 << (n - 1).bit_length()


def _fft_last_axis(values: np.ndarray) -> np.ndarray:
    """Recursive radix-2 decimation in time, vectorised over leading axes"""
    n = values.shape[-1]
    if n == 1:
        return values
    even = _fft_last_axis(values[..., ::2])
    odd = _fft_last_axis(values[..., 1::2])
    twiddled = np.exp(-2j * np.pi * np.arange(n // 2) / n) * odd
    return np.concatenate([even + twiddled, even - twiddled], axis=-1)


def fft2(values: np.ndarray) -> np.ndarray:
    """Fast transform; both trailing extents must be powers of two"""
    height, width = values.shape[-2:]
    if not (is_power_of_two(height) and is_power_of_two(width)):
        raise ValueError(f"radix-2 transform needs power-of-two sides, got {height}x{width}")
    spectrum = _fft_last_axis(values.astype(np.complex128))
    spectrum = _fft_last_axis(np.swapaxes(spectrum, -1, -2))
    return np.swapaxes(spectrum, -1, -2)


def _dft_matrix(n: int) -> np.ndarray:
    index = np.arange(n)
    # reduce the exponent modulo n so large products keep full phase precision
    phase = np.outer(index, index) % n
    return np.exp(-2j * np.pi * phase / n)


def naive_dft2(values: np.ndarray) -> np.ndarray:
    """O(N^2) matrix transform for arbitrary sides"""
    height, width = values.shape[-2:]
    rows = _dft_matrix(height)
    cols = _dft_matrix(width)
    return rows @ values.astype(np.complex128) @ cols


def dft2(values: np.ndarray) -> np.ndarray:
    """Forward DFT, radix-2 when possible"""
    height, width = values.shape[-2:]
    if is_power_of_two(height) and is_power_of_two(width):
        return fft2(values)
    return naive_dft2(values)
