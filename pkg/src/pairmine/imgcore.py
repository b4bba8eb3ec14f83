"""Raster images and the low-level filters the detector is built on.

Intensities live in [0, 1] as float64; 8-bit values only appear at the
PNG/JPEG boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from .errors import DecodeError, DimensionError, ParamError

LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True, eq=False)
class RasterImage:
    """An (h, w) or (h, w, 3) float array with values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        if arr.ndim not in (2, 3) or (arr.ndim == 3 and arr.shape[2] != 3):
            raise DimensionError(f"unsupported raster shape {arr.shape}")
        if arr.shape[0] == 0 or arr.shape[1] == 0:
            raise DimensionError(f"zero-sized image {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("raster contains non-finite values")
        if arr.min() < -1e-9 or arr.max() > 1 + 1e-9:
            raise ValueError("raster values must lie in [0, 1]")
        if arr.min() < 0 or arr.max() > 1:
            arr = np.clip(arr, 0.0, 1.0)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3

    @classmethod
    def from_uint8(cls, arr) -> "RasterImage":
        return cls(np.asarray(arr, dtype=np.float64) / 255.0)

    def to_uint8(self) -> np.ndarray:
        return np.clip(np.rint(self.data * 255.0), 0, 255).astype(np.uint8)

    def __repr__(self):
        return f"RasterImage({self.width}x{self.height}x{self.channels})"


def decode_image(path) -> RasterImage:
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.format not in ("PNG", "JPEG"):
                raise DecodeError(f"{path}: unsupported format {im.format}")
            im.load()
            if im.width == 0 or im.height == 0:
                raise DimensionError(f"{path}: zero-sized image")
            if im.mode in ("L", "I;16", "I", "F"):
                arr = np.asarray(im.convert("L"))
            else:
                arr = np.asarray(im.convert("RGB"))
    except FileNotFoundError:
        raise DecodeError(f"{path}: no such file") from None
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DecodeError(f"{path}: {exc}") from exc
    return RasterImage.from_uint8(arr)


def encode_png(img: RasterImage, path) -> None:
    Image.fromarray(img.to_uint8()).save(Path(path), format="PNG")


def to_grayscale(img: RasterImage) -> RasterImage:
    if img.channels == 1:
        return img
    return RasterImage(img.data @ np.asarray(LUMA))


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def blur_array(arr: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur of a 2D array with mirror boundaries."""
    if not sigma > 0:
        raise ParamError(f"sigma must be positive, got {sigma}")
    k = gaussian_kernel(sigma)
    # scipy's "mirror" reflects about the edge pixel centre (d c b | a b c d | c b a)
    out = ndimage.correlate1d(arr, k, axis=0, mode="mirror")
    return ndimage.correlate1d(out, k, axis=1, mode="mirror")


def gaussian_blur(img: RasterImage, sigma: float) -> RasterImage:
    if img.channels != 1:
        raise DimensionError("gaussian_blur expects a single-channel image")
    return RasterImage(blur_array(img.data, sigma))


def downsample2(img: RasterImage) -> RasterImage:
    if img.channels != 1:
        raise DimensionError("downsample2 expects a single-channel image")
    if img.width < 2 or img.height < 2:
        raise DimensionError(f"cannot halve a {img.width}x{img.height} image")
    h, w = img.height // 2 * 2, img.width // 2 * 2
    return RasterImage(img.data[0:h:2, 0:w:2])
