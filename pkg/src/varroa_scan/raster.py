"""Raster value types and the pixel-level primitives the detector composes.

Images are thin immutable wrappers around 2-D numpy arrays (row-major,
shape ``(height, width)``). All operations are pure: they validate their
inputs, allocate a fresh output, and never mutate operands, so they are
safe to call concurrently.

Conventions fixed here (and relied on everywhere else):

* grayscale conversion uses the BT.601 luma weights in exact integer
  arithmetic, rounding half up;
* thresholding is strict (``value > t``);
* morphology treats pixels outside the image as background (false);
* connected components are 4-connected.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import DimensionError, ParameterError, RangeError

__all__ = [
    "GrayImage",
    "SignedImage",
    "BinaryMask",
    "StructuringElement",
    "SeShape",
    "Region",
    "to_grayscale",
    "subtract",
    "absolute",
    "threshold",
    "scale",
    "subtract_saturating",
    "mask_to_intensity",
    "morphological_open",
    "morphological_open_gray",
    "connected_components",
    "mask_from_regions",
    "read_gray_png",
    "write_gray_png",
    "read_mask_png",
    "write_mask_png",
]

# 4-connectivity: orthogonal neighbours only.
_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def _frozen_copy(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, copy=True)
    out.setflags(write=False)
    return out


def _check_2d(data: np.ndarray, what: str) -> None:
    if data.ndim != 2:
        raise DimensionError(f"{what} must be 2-D, got shape {data.shape}")
    if data.shape[0] < 1 or data.shape[1] < 1:
        raise DimensionError(f"{what} must be non-empty, got shape {data.shape}")


def _check_same_dims(a, b) -> None:
    if a.width != b.width or a.height != b.height:
        raise DimensionError(
            f"operand dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit single-channel image; values in [0, 255]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        _check_2d(arr, "GrayImage")
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise RangeError("GrayImage values must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        object.__setattr__(self, "data", _frozen_copy(arr))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, GrayImage) and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class SignedImage:
    """Intermediate signed image; values in [-255, 510]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        _check_2d(arr, "SignedImage")
        if arr.size and (arr.min() < -255 or arr.max() > 510):
            raise RangeError("SignedImage values must lie in [-255, 510]")
        object.__setattr__(self, "data", _frozen_copy(arr.astype(np.int16)))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, SignedImage) and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Boolean foreground mask (true = foreground)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        _check_2d(arr, "BinaryMask")
        object.__setattr__(self, "data", _frozen_copy(arr.astype(bool)))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def count(self) -> int:
        """Number of foreground pixels."""
        return int(self.data.sum())

    def __eq__(self, other) -> bool:
        return isinstance(other, BinaryMask) and np.array_equal(self.data, other.data)


class SeShape(enum.Enum):
    SQUARE = "square"
    CROSS = "cross"


@dataclass(frozen=True)
class StructuringElement:
    """Flat structuring element of side 2*radius+1 centred on the origin."""

    radius: int = 1
    shape: SeShape = SeShape.SQUARE

    def __post_init__(self):
        if not isinstance(self.radius, int) or self.radius < 1:
            raise ParameterError(f"structuring element radius must be >= 1, got {self.radius}")
        if not isinstance(self.shape, SeShape):
            raise ParameterError(f"unknown structuring element shape: {self.shape!r}")

    def footprint(self) -> np.ndarray:
        size = 2 * self.radius + 1
        if self.shape is SeShape.SQUARE:
            return np.ones((size, size), dtype=bool)
        fp = np.zeros((size, size), dtype=bool)
        fp[self.radius, :] = True
        fp[:, self.radius] = True
        return fp


@dataclass(frozen=True)
class Region:
    """One 4-connected component of foreground pixels.

    ``pixels`` holds (x, y) coordinates; ``bbox`` is the tight inclusive
    bounding box (x_min, y_min, x_max, y_max).
    """

    id: int
    pixels: frozenset[tuple[int, int]]
    area: int = field(default=-1)
    bbox: tuple[int, int, int, int] = field(default=(-1, -1, -1, -1))

    def __post_init__(self):
        if not self.pixels:
            raise ParameterError("a region must contain at least one pixel")
        if self.area == -1:
            object.__setattr__(self, "area", len(self.pixels))
        elif self.area != len(self.pixels):
            raise ParameterError("region area does not match its pixel count")
        xs = [p[0] for p in self.pixels]
        ys = [p[1] for p in self.pixels]
        tight = (min(xs), min(ys), max(xs), max(ys))
        if self.bbox == (-1, -1, -1, -1):
            object.__setattr__(self, "bbox", tight)
        elif self.bbox != tight:
            raise ParameterError(f"region bbox {self.bbox} is not tight (expected {tight})")

    def intersects(self, other: "Region") -> bool:
        """True if the two regions share at least one pixel."""
        ax0, ay0, ax1, ay1 = self.bbox
        bx0, by0, bx1, by1 = other.bbox
        if ax1 < bx0 or bx1 < ax0 or ay1 < by0 or by1 < ay0:
            return False
        small, big = (self, other) if self.area <= other.area else (other, self)
        return not small.pixels.isdisjoint(big.pixels)


def _require_rgb(image: np.ndarray, what: str = "image") -> np.ndarray:
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DimensionError(f"{what} must have shape (h, w, 3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{what} must be non-empty, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise RangeError(f"{what} channel values must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    return arr


def to_grayscale(image: np.ndarray) -> GrayImage:
    """Convert an RGB raster to grayscale with BT.601 luma weights.

    Computed as (299*R + 587*G + 114*B + 500) // 1000: exact integer
    arithmetic, round half up, no platform-dependent float rounding.
    """
    arr = _require_rgb(image)
    r = arr[:, :, 0].astype(np.int32)
    g = arr[:, :, 1].astype(np.int32)
    b = arr[:, :, 2].astype(np.int32)
    gray = (299 * r + 587 * g + 114 * b + 500) // 1000
    return GrayImage(gray.astype(np.uint8))


def subtract(a: GrayImage, b: GrayImage) -> SignedImage:
    """Pixelwise a - b without clamping."""
    _check_same_dims(a, b)
    return SignedImage(a.data.astype(np.int16) - b.data.astype(np.int16))


def absolute(img: SignedImage) -> GrayImage:
    """Pixelwise absolute value; input values must lie in [-255, 255]."""
    if img.data.size and int(img.data.max()) > 255:
        raise RangeError("absolute() input values must lie in [-255, 255]")
    return GrayImage(np.abs(img.data).astype(np.uint8))


def threshold(img: GrayImage, t: int) -> BinaryMask:
    """Binary threshold: foreground where value > t (strict)."""
    t = int(t)
    if t < 0 or t > 255:
        raise ParameterError(f"threshold must lie in [0, 255], got {t}")
    return BinaryMask(img.data > t)


def scale(img: GrayImage, k: float) -> GrayImage:
    """Multiply by k >= 0, round half up, saturate at 255."""
    if k < 0:
        raise ParameterError(f"scale factor must be non-negative, got {k}")
    vals = np.floor(img.data.astype(np.float64) * float(k) + 0.5)
    return GrayImage(np.clip(vals, 0, 255).astype(np.uint8))


def subtract_saturating(a: GrayImage, b: GrayImage) -> GrayImage:
    """Pixelwise max(0, a - b)."""
    _check_same_dims(a, b)
    diff = a.data.astype(np.int16) - b.data.astype(np.int16)
    return GrayImage(np.maximum(diff, 0).astype(np.uint8))


def mask_to_intensity(mask: BinaryMask) -> GrayImage:
    """Promote a mask to intensities: true -> 255, false -> 0."""
    return GrayImage(mask.data.astype(np.uint8) * 255)


def morphological_open(mask: BinaryMask, se: StructuringElement) -> BinaryMask:
    """Binary opening (erosion then dilation); outside the image is false."""
    fp = se.footprint()
    eroded = ndimage.binary_erosion(mask.data, structure=fp, border_value=0)
    opened = ndimage.binary_dilation(eroded, structure=fp, border_value=0)
    return BinaryMask(opened)


def morphological_open_gray(img: GrayImage, se: StructuringElement) -> GrayImage:
    """Grayscale opening with a flat element; outside the image reads as 0.

    For flat elements, thresholding the result (strict >) equals binary
    opening of the thresholded input, so the two cleanup orders the
    pipeline exposes coincide.
    """
    fp = se.footprint()
    eroded = ndimage.minimum_filter(img.data, footprint=fp, mode="constant", cval=0)
    opened = ndimage.maximum_filter(eroded, footprint=fp, mode="constant", cval=0)
    return GrayImage(opened)


def connected_components(mask: BinaryMask) -> list[Region]:
    """Partition foreground into maximal 4-connected regions.

    Regions are ordered by (y_min, x_min) of their bounding boxes and get
    consecutive ids starting at 0.
    """
    labels, count = ndimage.label(mask.data, structure=_FOUR_CONNECTED)
    if count == 0:
        return []
    raw = []
    for index, slc in enumerate(ndimage.find_objects(labels), start=1):
        window = labels[slc] == index
        ys, xs = np.nonzero(window)
        xs = xs + slc[1].start
        ys = ys + slc[0].start
        pixels = frozenset(zip(xs.tolist(), ys.tolist()))
        bbox = (int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))
        raw.append((bbox[1], bbox[0], index, pixels, bbox))
    raw.sort(key=lambda r: (r[0], r[1], r[2]))
    return [
        Region(id=i, pixels=pixels, area=len(pixels), bbox=bbox)
        for i, (_, _, _, pixels, bbox) in enumerate(raw)
    ]


def mask_from_regions(regions: Iterable[Region], width: int, height: int) -> BinaryMask:
    """Union of the regions' pixels as a mask of the given dimensions."""
    data = np.zeros((height, width), dtype=bool)
    for region in regions:
        for x, y in region.pixels:
            data[y, x] = True
    return BinaryMask(data)


# ---------------------------------------------------------------------------
# PNG interchange
# ---------------------------------------------------------------------------

def write_gray_png(img: GrayImage, path: str | Path) -> None:
    Image.fromarray(img.data, mode="L").save(Path(path), format="PNG")


def read_gray_png(path: str | Path) -> GrayImage:
    with Image.open(Path(path)) as im:
        if im.mode != "L":
            raise RangeError(f"{path}: expected 8-bit single-channel PNG, got mode {im.mode}")
        return GrayImage(np.asarray(im, dtype=np.uint8))


def write_mask_png(mask: BinaryMask, path: str | Path) -> None:
    """Write a mask as an 8-bit PNG: 0 = false, 255 = true."""
    Image.fromarray(mask.data.astype(np.uint8) * 255, mode="L").save(Path(path), format="PNG")


def read_mask_png(path: str | Path, strict: bool = True) -> BinaryMask:
    """Read a mask PNG. With strict=True only values {0, 255} are accepted."""
    with Image.open(Path(path)) as im:
        if im.mode != "L":
            raise RangeError(f"{path}: expected 8-bit single-channel PNG, got mode {im.mode}")
        arr = np.asarray(im, dtype=np.uint8)
    if strict:
        bad = np.unique(arr[(arr != 0) & (arr != 255)])
        if bad.size:
            raise RangeError(f"{path}: mask contains values other than 0/255: {bad[:8].tolist()}")
    return BinaryMask(arr > 0)
