"""Image quality metrics and their CSV report

PSNR uses peak 1.0 on [0, 1] pixels and reports identical images as +inf.
SSIM is the single-scale index with an 11x11 Gaussian window (sigma 1.5),
K1 = 0.01, K2 = 0.03 and L = 1, averaged over valid window positions only.
"""
import csv
import io
import math
from dataclasses import dataclass, field
from typing import List

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import ShapeError
from .image import GrayImage
from .utils import PathLike, atomic_write_text

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DYNAMIC_RANGE = 1.0

CSV_HEADER = ("path", "psnr_db", "ssim")


def _check_pair(a: GrayImage, b: GrayImage) -> None:
    if a.pixels.shape != b.pixels.shape:
        raise ShapeError(f"image sizes differ: {a.pixels.shape} vs {b.pixels.shape}")


def psnr(a: GrayImage, b: GrayImage) -> float:
    """10 log10(1 / MSE) in dB"""
    _check_pair(a, b)
    mse = float(np.mean((a.pixels - b.pixels) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(DYNAMIC_RANGE**2 / mse)


def _gaussian_window() -> np.ndarray:
    offsets = np.arange(SSIM_WINDOW, dtype=np.float64) - SSIM_WINDOW // 2
    weights = np.exp(-0.5 * (offsets / SSIM_SIGMA) ** 2)
    return weights / weights.sum()


def _filter_valid(values: np.ndarray, window: np.ndarray) -> np.ndarray:
    """Separable correlation keeping only positions where the window fits"""
    rows = sliding_window_view(values, window.size, axis=0) @ window
    return sliding_window_view(rows, window.size, axis=1) @ window


def ssim_map(a: GrayImage, b: GrayImage) -> np.ndarray:
    """Local SSIM at each valid window position"""
    _check_pair(a, b)
    if min(a.pixels.shape) < SSIM_WINDOW:
        raise ShapeError(f"SSIM needs sides of at least {SSIM_WINDOW}, got {a.pixels.shape}")
    window = _gaussian_window()
    c1 = (SSIM_K1 * DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * DYNAMIC_RANGE) ** 2
    x, y = a.pixels, b.pixels

    mu_x = _filter_valid(x, window)
    mu_y = _filter_valid(y, window)
    mu_xy = mu_x * mu_y
    var_x = _filter_valid(x * x, window) - mu_x * mu_x
    var_y = _filter_valid(y * y, window) - mu_y * mu_y
    cov = _filter_valid(x * y, window) - mu_xy

    numerator = (2.0 * mu_xy + c1) * (2.0 * cov + c2)
    denominator = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return numerator / denominator


def ssim(a: GrayImage, b: GrayImage) -> float:
    """Mean structural similarity, in [-1, 1]"""
    return float(np.mean(ssim_map(a, b)))


@dataclass(frozen=True)
class MetricRecord:
    """Scores of one restored image"""

    path: str
    psnr_db: float
    ssim: float
    cropped: bool = False


@dataclass
class MetricReport:
    """Per-image records and their arithmetic means"""

    records: List[MetricRecord] = field(default_factory=list)

    def add(self, record: MetricRecord) -> None:
        """Append a record"""
        self.records.append(record)

    @property
    def mean_psnr(self) -> float:
        if not self.records:
            return math.nan
        return float(np.mean([record.psnr_db for record in self.records]))

    @property
    def mean_ssim(self) -> float:
        if not self.records:
            return math.nan
        return float(np.mean([record.ssim for record in self.records]))

    def to_csv(self) -> str:
        """`path,psnr_db,ssim` rows followed by the MEAN row"""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for record in self.records:
            writer.writerow([record.path, repr(record.psnr_db), repr(record.ssim)])
        writer.writerow(["MEAN", repr(self.mean_psnr), repr(self.mean_ssim)])
        return buffer.getvalue()

    def write_csv(self, path: PathLike) -> None:
        """Write the CSV atomically"""
        atomic_write_text(path, self.to_csv())
