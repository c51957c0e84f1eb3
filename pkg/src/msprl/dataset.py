"""Image pools, the training patch sampler and its background prefetcher

Every batch draws from its own random stream derived from (seed, batch index),
so the sequence of batches does not depend on how far ahead the prefetcher
runs, and a resumed run sees exactly the batches an uninterrupted run would.
"""
import logging
import queue
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import DatasetError, ShapeError
from .halftone import floyd_steinberg
from .image import GrayImage, HalftoneImage, images_to_tensor, load_image, read_image_size
from .tensor import DEFAULT_DTYPE, Tensor
from .utils import PathLike, batch_rng

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")

Halftoner = Callable[[GrayImage], HalftoneImage]


@dataclass(frozen=True)
class DatasetSpec:
    """Where a split lives and which images qualify.

    When `<root>/<split>.txt` exists it lists image paths relative to `root`,
    one per line; otherwise every `.pgm` file directly under `root` is used.
    """

    root: Path
    split: str = "train"
    min_side: int = 256

    def __post_init__(self) -> None:
        object.__setattr__(self, "root", Path(self.root))
        if self.split not in SPLITS:
            raise DatasetError(f"unknown split '{self.split}', expected one of {SPLITS}")
        if self.min_side < 1:
            raise DatasetError(f"min_side must be positive, got {self.min_side}")

    @property
    def split_file(self) -> Path:
        return self.root / f"{self.split}.txt"


def list_images(spec: DatasetSpec) -> List[Path]:
    """Paths of the split's images whose shorter side reaches `spec.min_side`"""
    if spec.split_file.is_file():
        lines = spec.split_file.read_text(encoding="utf-8").splitlines()
        entries = [line.strip() for line in lines]
        candidates = [spec.root / entry for entry in entries if entry and not entry.startswith("#")]
        missing = [str(path) for path in candidates if not path.is_file()]
        if missing:
            raise DatasetError(f"{spec.split_file} lists missing files: {', '.join(missing[:3])}")
    elif spec.root.is_dir():
        candidates = sorted(spec.root.glob("*.pgm"))
    else:
        raise DatasetError(f"dataset root {spec.root} is not a directory")

    accepted = [path for path in candidates if min(read_image_size(path)) >= spec.min_side]
    if len(accepted) < len(candidates):
        logger.info(
            "%s/%s: skipped %d image(s) smaller than %d px",
            spec.root,
            spec.split,
            len(candidates) - len(accepted),
            spec.min_side,
        )
    return accepted


class Dataset:
    """In-memory pool of grayscale images with their source paths"""

    def __init__(self, images: Sequence[GrayImage], paths: Optional[Sequence[str]] = None) -> None:
        self.images = list(images)
        self.paths = list(paths) if paths is not None else [f"#{i}" for i in range(len(images))]
        if len(self.paths) != len(self.images):
            raise DatasetError("every image needs exactly one path")

    @classmethod
    def load(cls, spec: DatasetSpec) -> "Dataset":
        """Read every qualifying image of a split"""
        paths = list_images(spec)
        logger.info("%s/%s: %d image(s)", spec.root, spec.split, len(paths))
        return cls([load_image(path) for path in paths], [str(path) for path in paths])

    def __len__(self) -> int:
        return len(self.images)

    def __getitem__(self, index: int) -> GrayImage:
        return self.images[index]

    def require_nonempty(self) -> None:
        """Raise when there is nothing to train or evaluate on"""
        if not self.images:
            raise DatasetError("dataset is empty")


def sample_patch(image: GrayImage, size: int, rng: np.random.Generator) -> GrayImage:
    """Crop a size x size patch at a uniformly random integer offset"""
    if image.height < size or image.width < size:
        raise DatasetError(f"image {image.height}x{image.width} is smaller than patch size {size}")
    top = int(rng.integers(0, image.height - size + 1))
    left = int(rng.integers(0, image.width - size + 1))
    return image.crop(top, left, size, size)


def augment_flip(patch: GrayImage, rng: np.random.Generator) -> GrayImage:
    """Mirror horizontally with probability 0.5"""
    if rng.random() < 0.5:
        return patch.mirrored()
    return patch


def make_batch(
    patches: Sequence[GrayImage],
    halftoner: Halftoner = floyd_steinberg,
    dtype=DEFAULT_DTYPE,
) -> Tuple[Tensor, Tensor]:
    """(halftone inputs, continuous targets), both N x 1 x h x w and index-aligned"""
    if not patches:
        raise ShapeError("cannot build an empty batch")
    if len({patch.pixels.shape for patch in patches}) != 1:
        raise ShapeError("all patches of a batch must share their size")
    halftones = [halftoner(patch) for patch in patches]
    return images_to_tensor(halftones, dtype), images_to_tensor(patches, dtype)


@dataclass
class Batch:
    """One training step's worth of paired data"""

    index: int
    inputs: Tensor
    targets: Tensor


class PatchSampler:
    """Draws random augmented patches and halftones them on the fly"""

    def __init__(
        self,
        dataset: Dataset,
        batch_size: int,
        patch_size: int,
        seed: int,
        augment: bool = True,
        halftoner: Halftoner = floyd_steinberg,
        dtype=DEFAULT_DTYPE,
    ) -> None:
        dataset.require_nonempty()
        too_small = [
            path
            for path, image in zip(dataset.paths, dataset.images)
            if min(image.height, image.width) < patch_size
        ]
        if too_small:
            raise DatasetError(f"{len(too_small)} image(s) smaller than patch size {patch_size}")
        self.dataset = dataset
        self.batch_size = batch_size
        self.patch_size = patch_size
        self.seed = seed
        self.augment = augment
        self.halftoner = halftoner
        self.dtype = dtype

    def patches(self, index: int) -> List[GrayImage]:
        """The continuous-tone patches of batch `index`"""
        rng = batch_rng(self.seed, index)
        picks = rng.integers(0, len(self.dataset), size=self.batch_size)
        patches = []
        for pick in picks:
            patch = sample_patch(self.dataset[int(pick)], self.patch_size, rng)
            if self.augment:
                patch = augment_flip(patch, rng)
            patches.append(patch)
        return patches

    def batch(self, index: int) -> Batch:
        """Batch `index`, identical on every call"""
        inputs, targets = make_batch(self.patches(index), self.halftoner, self.dtype)
        return Batch(index, inputs, targets)


class BatchPrefetcher:
    """Prepares batches [start, stop) on a worker thread through a bounded queue"""

    _DONE = object()

    def __init__(self, sampler: PatchSampler, start: int, stop: int, depth: int = 4) -> None:
        if depth < 1:
            raise ValueError(f"queue depth must be positive, got {depth}")
        self.sampler = sampler
        self.start = start
        self.stop = stop
        self._queue: "queue.Queue[object]" = queue.Queue(maxsize=depth)
        self._closed = threading.Event()
        self._worker = threading.Thread(target=self._produce, name="batch-prefetch", daemon=True)

    def _put(self, item: object) -> bool:
        while not self._closed.is_set():
            try:
                self._queue.put(item, timeout=0.1)
                return True
            except queue.Full:
                continue
        return False

    def _produce(self) -> None:
        try:
            for index in range(self.start, self.stop):
                if not self._put(self.sampler.batch(index)):
                    return
        except BaseException as error:  # pylint: disable=broad-except
            self._put(error)
            return
        self._put(self._DONE)

    def __enter__(self) -> "BatchPrefetcher":
        self._worker.start()
        return self

    def __exit__(self, *_: object) -> None:
        self.close()

    def close(self) -> None:
        """Stop the worker and drop pending batches"""
        self._closed.set()
        if self._worker.is_alive():
            self._worker.join()

    def __iter__(self) -> Iterator[Batch]:
        while True:
            item = self._queue.get()
            if item is self._DONE:
                return
            if isinstance(item, BaseException):
                raise item
            assert isinstance(item, Batch)
            yield item


def load_split(root: PathLike, split: str, min_side: int) -> Dataset:
    """Shortcut for Dataset.load(DatasetSpec(...))"""
    return Dataset.load(DatasetSpec(Path(root), split, min_side))
