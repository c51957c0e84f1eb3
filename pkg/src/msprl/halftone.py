"""Error-diffusion halftoning and the low-pass baseline restorer

The halftoner is the classic Floyd-Steinberg scheme with its conventions
pinned: raster scan (left to right, top to bottom, no serpentine), output 1
when the accumulated value is >= 0.5, error diffused with weights 7/16, 3/16,
5/16, 1/16, and error falling outside the image discarded. Accumulation runs
in double precision, so the result is fully deterministic.
"""
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.ndimage import correlate1d

from .image import GrayImage, HalftoneImage, Raster

THRESHOLD = 0.5
DEFAULT_SIGMA = 1.2


@dataclass(frozen=True)
class DiffusionKernel:
    """Error weights keyed by (dx, dy) offsets ahead of the current pixel"""

    taps: Tuple[Tuple[int, int, float], ...]

    def __post_init__(self) -> None:
        assert sum(weight for _, _, weight in self.taps) == 1.0
        assert all(dy > 0 or (dy == 0 and dx > 0) for dx, dy, _ in self.taps)


FLOYD_STEINBERG = DiffusionKernel(
    taps=((1, 0, 7 / 16), (-1, 1, 3 / 16), (0, 1, 5 / 16), (1, 1, 1 / 16)),
)


def error_diffusion(image: GrayImage, kernel: DiffusionKernel) -> HalftoneImage:
    """Threshold each pixel in raster order and push the error onto unvisited neighbours"""
    height, width = image.height, image.width
    work = image.pixels.astype(np.float64).tolist()
    out = np.zeros((height, width), dtype=np.uint8)
    taps = kernel.taps
    for y in range(height):
        row = work[y]
        bits = [0] * width
        for x in range(width):
            value = row[x]
            bit = 1 if value >= THRESHOLD else 0
            bits[x] = bit
            error = value - bit
            if error == 0.0:
                continue
            for dx, dy, weight in taps:
                nx, ny = x + dx, y + dy
                if 0 <= nx < width and ny < height:
                    work[ny][nx] += error * weight
        out[y] = bits
    return HalftoneImage(out)


def floyd_steinberg(image: GrayImage) -> HalftoneImage:
    """Floyd-Steinberg halftone of a continuous-tone image"""
    return error_diffusion(image, FLOYD_STEINBERG)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled Gaussian of radius ceil(3 sigma), renormalised to sum to one"""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = int(math.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    weights = np.exp(-0.5 * (offsets / sigma) ** 2)
    return weights / weights.sum()


def gaussian_baseline(halftone: Raster, sigma: float = DEFAULT_SIGMA) -> GrayImage:
    """Separable Gaussian low-pass with mirrored edges, clamped to [0, 1]"""
    weights = gaussian_kernel(sigma)
    pixels = halftone.pixels.astype(np.float64)
    # scipy's "reflect" mirrors about the edge, repeating the border sample
    blurred = correlate1d(pixels, weights, axis=0, mode="reflect")
    blurred = correlate1d(blurred, weights, axis=1, mode="reflect")
    return GrayImage.from_clamped(blurred)
