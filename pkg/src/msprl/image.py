"""Grayscale and halftone rasters, and binary PGM (P5) reading and writing

Pixel byte v maps to v/255. Saving clamps to [0, 1] and rounds half up, so
images whose values are multiples of 1/255 survive a round trip bit-exactly.
Files are written with the canonical header `P5\\n<width> <height>\\n255\\n`.
"""
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import numpy as np

from .exceptions import ImageFormatError, ShapeError
from .tensor import DEFAULT_DTYPE, Tensor
from .utils import PathLike, atomic_write_bytes, center_crop_box

MAXVAL = 255
_WHITESPACE = b" \t\r\n"


@dataclass(frozen=True)
class GrayImage:
    """Continuous-tone raster with pixels in [0, 1]"""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        pixels = np.asarray(self.pixels, dtype=np.float64)
        if pixels.ndim != 2 or min(pixels.shape) < 1:
            raise ShapeError(f"gray image must be a non-empty H x W array, got {pixels.shape}")
        if not np.all((pixels >= 0.0) & (pixels <= 1.0)):
            raise ImageFormatError("gray image pixels must lie in [0, 1]")
        object.__setattr__(self, "pixels", pixels)

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @classmethod
    def from_clamped(cls, values: np.ndarray) -> "GrayImage":
        """Build an image from arbitrary reals by clamping to [0, 1]"""
        return cls(np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0))

    def crop(self, top: int, left: int, height: int, width: int) -> "GrayImage":
        """Axis-aligned sub-image"""
        return GrayImage(self.pixels[top : top + height, left : left + width])

    def mirrored(self) -> "GrayImage":
        """Horizontal mirror"""
        return GrayImage(self.pixels[:, ::-1])


@dataclass(frozen=True)
class HalftoneImage:
    """Bilevel raster with pixels in {0, 1}"""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        pixels = np.asarray(self.pixels)
        if pixels.ndim != 2 or min(pixels.shape) < 1:
            raise ShapeError(f"halftone must be a non-empty H x W array, got {pixels.shape}")
        if not np.all((pixels == 0) | (pixels == 1)):
            raise ImageFormatError("halftone pixels must be exactly 0 or 1")
        object.__setattr__(self, "pixels", pixels.astype(np.uint8))

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    def to_gray(self) -> GrayImage:
        """The same raster as 0.0 / 1.0 intensities"""
        return GrayImage(self.pixels.astype(np.float64))


Raster = Union[GrayImage, HalftoneImage]


def center_crop(image: GrayImage, multiple: int) -> Tuple[GrayImage, bool]:
    """Largest centred crop with sides divisible by `multiple`, and whether it cropped"""
    top, left, height, width = center_crop_box(image.height, image.width, multiple)
    if height < 1 or width < 1:
        raise ShapeError(f"image {image.height}x{image.width} is smaller than {multiple}")
    if (height, width) == (image.height, image.width):
        return image, False
    return image.crop(top, left, height, width), True


def _next_token(data: bytes, pos: int) -> Tuple[bytes, int]:
    """Read one header token, skipping whitespace and `#` comments"""
    while pos < len(data):
        if data[pos] in _WHITESPACE:
            pos += 1
        elif data[pos : pos + 1] == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
        else:
            break
    start = pos
    while pos < len(data) and data[pos] not in _WHITESPACE and data[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ImageFormatError("malformed PGM header: unexpected end of file")
    return data[start:pos], pos


def parse_pgm_header(data: bytes) -> Tuple[int, int, int]:
    """(width, height, payload offset) of an 8-bit P5 file"""
    magic, pos = _next_token(data, 0)
    if magic in (b"P6", b"P3"):
        raise ImageFormatError("colour PNM input is not supported; convert to grayscale P5")
    if magic != b"P5":
        raise ImageFormatError(f"not a binary PGM file (magic {magic[:8]!r})")
    fields = []
    for name in ("width", "height", "maxval"):
        token, pos = _next_token(data, pos)
        if not token.isdigit():
            raise ImageFormatError(f"malformed PGM header: {name} is {token[:16]!r}")
        fields.append(int(token))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise ImageFormatError(f"malformed PGM header: size {width}x{height}")
    if maxval != MAXVAL:
        raise ImageFormatError(f"unsupported PGM maxval {maxval}, only 8-bit (255) is accepted")
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise ImageFormatError("malformed PGM header: missing separator before payload")
    return width, height, pos + 1


def decode_pgm(data: bytes) -> GrayImage:
    """Decode P5 bytes"""
    width, height, offset = parse_pgm_header(data)
    payload = data[offset : offset + width * height]
    if len(payload) < width * height:
        raise ImageFormatError(
            f"truncated PGM payload: expected {width * height} bytes, found {len(payload)}"
        )
    raster = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return GrayImage(raster.astype(np.float64) / MAXVAL)


def to_bytes(pixels: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1] and quantise to bytes with round-half-up"""
    clamped = np.clip(np.asarray(pixels, dtype=np.float64), 0.0, 1.0)
    return np.floor(clamped * MAXVAL + 0.5).astype(np.uint8)


def encode_pgm(image: Raster) -> bytes:
    """Encode as canonical P5 bytes; halftones become 0 / 255"""
    if isinstance(image, HalftoneImage):
        raster = image.pixels * np.uint8(MAXVAL)
    else:
        raster = to_bytes(image.pixels)
    header = f"P5\n{image.width} {image.height}\n{MAXVAL}\n".encode("ascii")
    return header + raster.tobytes()


def load_image(path: PathLike) -> GrayImage:
    """Read an 8-bit binary PGM file"""
    with open(path, "rb") as pgm_file:
        data = pgm_file.read()
    try:
        return decode_pgm(data)
    except ImageFormatError as error:
        raise ImageFormatError(f"{path}: {error}") from error


def read_image_size(path: PathLike) -> Tuple[int, int]:
    """(height, width) from the header alone"""
    with open(path, "rb") as pgm_file:
        head = pgm_file.read(512)
    width, height, _ = parse_pgm_header(head)
    return height, width


def save_image(image: Raster, path: PathLike) -> None:
    """Write an image as P5, atomically"""
    atomic_write_bytes(path, encode_pgm(image))


def images_to_tensor(rasters: Sequence[Raster], dtype=DEFAULT_DTYPE) -> Tensor:
    """Stack equally sized rasters into an N x 1 x H x W tensor"""
    shapes = {raster.pixels.shape for raster in rasters}
    if len(shapes) != 1:
        raise ShapeError(f"cannot stack rasters of sizes {sorted(shapes)}")
    stacked = np.stack([raster.pixels for raster in rasters])[:, None, :, :]
    return Tensor(stacked, dtype=dtype)


def tensor_to_images(tensor: Tensor) -> List[GrayImage]:
    """Clamp every N x 1 x H x W slice into a GrayImage"""
    if tensor.ndim != 4 or tensor.shape[1] != 1:
        raise ShapeError(f"expected an N x 1 x H x W tensor, got {tensor.shape}")
    return [GrayImage.from_clamped(item[0]) for item in tensor.data]


def normalize_min_max(channel: np.ndarray) -> GrayImage:
    """Map the channel's range onto [0, 1]; flat channels render black"""
    low = float(channel.min())
    high = float(channel.max())
    if high <= low:
        return GrayImage(np.zeros(channel.shape, dtype=np.float64))
    scaled = (channel.astype(np.float64) - low) / (high - low)
    return GrayImage(np.clip(scaled, 0.0, 1.0))

