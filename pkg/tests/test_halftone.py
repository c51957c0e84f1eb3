"""Test error diffusion and the Gaussian baseline"""
import numpy as np
import pytest

from msprl.halftone import floyd_steinberg, gaussian_baseline, gaussian_kernel
from msprl.image import GrayImage, HalftoneImage


def trace_floyd_steinberg(pixels: np.ndarray) -> np.ndarray:
    """Pixel-by-pixel reference: raster order, >= 0.5 threshold, edge error dropped"""
    work = pixels.astype(np.float64).copy()
    height, width = work.shape
    out = np.zeros((height, width), dtype=np.uint8)
    for y in range(height):
        for x in range(width):
            old = float(work[y, x])
            new = 1 if old >= 0.5 else 0
            out[y, x] = new
            err = old - new
            if err == 0.0:
                continue
            if x + 1 < width:
                work[y, x + 1] = work[y, x + 1] + err * (7 / 16)
            if y + 1 < height:
                if x - 1 >= 0:
                    work[y + 1, x - 1] = work[y + 1, x - 1] + err * (3 / 16)
                work[y + 1, x] = work[y + 1, x] + err * (5 / 16)
                if x + 1 < width:
                    work[y + 1, x + 1] = work[y + 1, x + 1] + err * (1 / 16)
    return out


def test_matches_pixel_trace(rng):
    """Bit-exact agreement with the reference trace on random images"""
    for _ in range(100):
        pixels = rng.random((32, 32))
        result = floyd_steinberg(GrayImage(pixels))
        np.testing.assert_array_equal(result.pixels, trace_floyd_steinberg(pixels))


def test_two_by_two_mid_gray():
    """The 2 x 2 all-0.5 case yields a checkerboard"""
    result = floyd_steinberg(GrayImage(np.full((2, 2), 0.5)))
    np.testing.assert_array_equal(result.pixels, [[1, 0], [0, 1]])


def test_constant_black_and_white():
    """Extremes map to themselves"""
    assert not floyd_steinberg(GrayImage(np.zeros((5, 5)))).pixels.any()
    assert floyd_steinberg(GrayImage(np.ones((5, 5)))).pixels.all()


def test_idempotent_on_bilevel_input(rng):
    """Halftoning a halftone reproduces it"""
    bits = HalftoneImage(rng.integers(0, 2, size=(16, 16)))
    np.testing.assert_array_equal(floyd_steinberg(bits.to_gray()).pixels, bits.pixels)


def test_mean_is_preserved(rng):
    """Error diffusion keeps the average tone"""
    for _ in range(2):
        pixels = rng.random((256, 256))
        result = floyd_steinberg(GrayImage(pixels))
        assert abs(result.pixels.mean() - pixels.mean()) < 0.01


def test_gaussian_kernel():
    """Radius ceil(3 sigma), unit sum, symmetric"""
    kernel = gaussian_kernel(1.2)
    assert kernel.size == 2 * 4 + 1
    assert abs(kernel.sum() - 1.0) < 1e-12
    np.testing.assert_allclose(kernel, kernel[::-1])
    with pytest.raises(ValueError):
        gaussian_kernel(0.0)


def test_baseline_keeps_constant_images():
    """A constant halftone blurs to the same constant"""
    ones = HalftoneImage(np.ones((8, 8), dtype=np.uint8))
    np.testing.assert_allclose(gaussian_baseline(ones).pixels, np.ones((8, 8)), atol=1e-12)
    zeros = HalftoneImage(np.zeros((8, 8), dtype=np.uint8))
    np.testing.assert_array_equal(gaussian_baseline(zeros).pixels, np.zeros((8, 8)))


def test_baseline_approximates_tone(rng):
    """Blurring a mid-gray halftone lands near mid-gray"""
    halftone = floyd_steinberg(GrayImage(np.full((64, 64), 0.5)))
    restored = gaussian_baseline(halftone, sigma=2.0)
    assert abs(restored.pixels.mean() - 0.5) < 0.02
    assert restored.pixels.min() >= 0.0 and restored.pixels.max() <= 1.0
