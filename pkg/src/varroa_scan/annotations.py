"""Dataset interchange: class masks, YOLO boxes, and the on-disk layout.

Ground truth is a three-channel mask image where each channel carries one
category: red = mite, green = bee, blue = background. Decoding is argmax
over the channels with ties resolved mite > bee > background (boundary
pixels of real exports are anti-aliased; the tie rule biases them toward
the rarer, safety-critical class). An all-zero pixel decodes to
background.

The canonical dataset layout is::

    root/<treatment>/<category>/<capture_id>/
        white.png  ir.png  turquoise.png   # photos, one per illumination
        mask.png                           # class mask (optional)
        boxes.txt                          # YOLO boxes (optional)

with treatment in {before, after} and category in {mite, bee,
bee_with_mite}. Captures may also live directly under ``root/<capture_id>/``
(no treatment/category) — used for the static empty-scene background.
A ``manifest.txt`` at the root overrides the directory scan entirely.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import AnnotationParseError, DatasetError, DimensionError, RangeError
from .raster import BinaryMask, _require_rgb

__all__ = [
    "PixelClass",
    "ClassMask",
    "YoloClass",
    "YoloBox",
    "Treatment",
    "Category",
    "DatasetEntry",
    "DatasetIndex",
    "decode_class_mask",
    "encode_class_mask",
    "mite_mask_of",
    "parse_yolo_line",
    "parse_yolo_file",
    "format_yolo_line",
    "load_dataset",
    "read_rgb_png",
    "write_rgb_png",
    "read_class_mask_png",
    "write_class_mask_png",
    "PHOTO_FILENAMES",
    "MASK_FILENAME",
    "BOXES_FILENAME",
    "MANIFEST_FILENAME",
]

log = logging.getLogger(__name__)

PHOTO_FILENAMES = {"white": "white.png", "infrared": "ir.png", "turquoise": "turquoise.png"}
MASK_FILENAME = "mask.png"
BOXES_FILENAME = "boxes.txt"
MANIFEST_FILENAME = "manifest.txt"


class PixelClass(enum.IntEnum):
    BACKGROUND = 0
    BEE = 1
    MITE = 2


# channel colour for each class when encoded as RGB
_CLASS_COLOR = {
    PixelClass.BACKGROUND: (0, 0, 255),
    PixelClass.BEE: (0, 255, 0),
    PixelClass.MITE: (255, 0, 0),
}


@dataclass(frozen=True, eq=False)
class ClassMask:
    """Per-pixel class labels in {background, bee, mite}."""

    labels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.labels)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"ClassMask must be non-empty 2-D, got shape {arr.shape}")
        arr = arr.astype(np.uint8)
        if arr.max(initial=0) > int(PixelClass.MITE):
            raise RangeError("ClassMask labels must be 0 (background), 1 (bee) or 2 (mite)")
        arr = np.array(arr, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, ClassMask) and np.array_equal(self.labels, other.labels)


def decode_class_mask(image: np.ndarray) -> ClassMask:
    """Decode an RGB mask image to per-pixel classes.

    Argmax over (R -> mite, G -> bee, B -> background); ties resolve
    mite > bee > background; an all-zero pixel is background.
    """
    arr = _require_rgb(image, "class mask")
    r, g, b = arr[:, :, 0], arr[:, :, 1], arr[:, :, 2]
    mite = (r >= g) & (r >= b) & (r > 0)
    bee = ~mite & (g >= b) & (g > 0)
    labels = np.zeros(r.shape, dtype=np.uint8)
    labels[bee] = PixelClass.BEE
    labels[mite] = PixelClass.MITE
    return ClassMask(labels)


def encode_class_mask(mask: ClassMask) -> np.ndarray:
    """Encode classes to the pure-channel RGB convention (exact decode inverse)."""
    lut = np.zeros((3, 3), dtype=np.uint8)
    for cls, color in _CLASS_COLOR.items():
        lut[int(cls)] = color
    return lut[mask.labels]


def mite_mask_of(mask: ClassMask) -> BinaryMask:
    """Foreground exactly where the class is mite."""
    return BinaryMask(mask.labels == int(PixelClass.MITE))


# ---------------------------------------------------------------------------
# YOLO annotations
# ---------------------------------------------------------------------------

class YoloClass(enum.IntEnum):
    BEE = 0
    MITE = 1


@dataclass(frozen=True)
class YoloBox:
    """One YOLO box: centre and size as fractions of the image dimensions."""

    class_id: YoloClass
    cx: float
    cy: float
    w: float
    h: float


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def parse_yolo_line(
    line: str, image_dims: tuple[int, int], line_number: int | None = None
) -> tuple[YoloBox, tuple[int, int, int, int]]:
    """Parse one 'class cx cy w h' line.

    Returns the fractional box plus its pixel-space bbox
    (x_min, y_min, x_max, y_max), half-open and clamped to the image, so
    x_max - x_min is the pixel width.
    """
    fields = line.split()
    if len(fields) != 5:
        raise AnnotationParseError(
            f"expected 5 fields (class cx cy w h), got {len(fields)}", line_number
        )
    try:
        class_raw = int(fields[0])
        cx, cy, w, h = (float(f) for f in fields[1:])
    except ValueError:
        raise AnnotationParseError(f"non-numeric field in {line!r}", line_number) from None
    try:
        class_id = YoloClass(class_raw)
    except ValueError:
        raise AnnotationParseError(
            f"unknown class {class_raw} (0 = bee, 1 = mite)", line_number
        ) from None
    if not (0.0 <= cx <= 1.0 and 0.0 <= cy <= 1.0):
        raise AnnotationParseError(f"centre ({cx}, {cy}) outside [0, 1]", line_number)
    if not (0.0 < w <= 1.0 and 0.0 < h <= 1.0):
        raise AnnotationParseError(f"size ({w}, {h}) outside (0, 1]", line_number)

    width, height = image_dims
    x0 = min(max(_round_half_up((cx - w / 2) * width), 0), width)
    x1 = min(max(_round_half_up((cx + w / 2) * width), 0), width)
    y0 = min(max(_round_half_up((cy - h / 2) * height), 0), height)
    y1 = min(max(_round_half_up((cy + h / 2) * height), 0), height)
    return YoloBox(class_id, cx, cy, w, h), (x0, y0, x1, y1)


def parse_yolo_file(
    path: str | Path, image_dims: tuple[int, int]
) -> list[tuple[YoloBox, tuple[int, int, int, int]]]:
    """Parse a whole annotation file; blank lines are skipped."""
    out = []
    text = Path(path).read_text()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        if raw.strip():
            out.append(parse_yolo_line(raw, image_dims, line_number=line_no))
    return out


def format_yolo_line(box: YoloBox) -> str:
    return f"{int(box.class_id)} {box.cx:.6f} {box.cy:.6f} {box.w:.6f} {box.h:.6f}"


# ---------------------------------------------------------------------------
# Dataset index
# ---------------------------------------------------------------------------

class Treatment(enum.Enum):
    BEFORE = "before"
    AFTER = "after"


class Category(enum.Enum):
    MITE = "mite"
    BEE = "bee"
    BEE_WITH_MITE = "bee_with_mite"


@dataclass(frozen=True)
class DatasetEntry:
    capture_id: str
    treatment: Treatment | None
    category: Category | None
    white: Path | None
    infrared: Path | None
    turquoise: Path | None
    mask: Path | None
    boxes: Path | None

    def photo_paths(self) -> dict[str, Path | None]:
        return {"white": self.white, "infrared": self.infrared, "turquoise": self.turquoise}

    def is_complete_triplet(self) -> bool:
        return None not in (self.white, self.infrared, self.turquoise)


@dataclass(frozen=True)
class DatasetIndex:
    root: Path
    entries: tuple[DatasetEntry, ...]
    warnings: tuple[str, ...] = ()
    errors: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, capture_id: str) -> DatasetEntry | None:
        for entry in self.entries:
            if entry.capture_id == capture_id:
                return entry
        return None

    def counts(self) -> dict[tuple[Treatment | None, Category | None], int]:
        out: dict[tuple[Treatment | None, Category | None], int] = {}
        for entry in self.entries:
            key = (entry.treatment, entry.category)
            out[key] = out.get(key, 0) + 1
        return out


def _verify_mask_readable(path: Path) -> str | None:
    """Return an error string if the mask file cannot be opened as an image."""
    try:
        with Image.open(path) as im:
            im.size  # forces header parse
    except (UnidentifiedImageError, OSError) as exc:
        return f"unreadable mask {path}: {exc}"
    return None


def _build_entry(
    capture_id: str,
    directory: Path,
    treatment: Treatment | None,
    category: Category | None,
    warnings: list[str],
    errors: list[str],
) -> DatasetEntry:
    photos: dict[str, Path | None] = {}
    for key, fname in PHOTO_FILENAMES.items():
        p = directory / fname
        if p.is_file():
            photos[key] = p
        else:
            photos[key] = None
            warnings.append(f"{capture_id}: missing {fname}")
    mask = directory / MASK_FILENAME
    if mask.is_file():
        err = _verify_mask_readable(mask)
        if err:
            errors.append(f"{capture_id}: {err}")
            mask = None
    else:
        mask = None
    boxes = directory / BOXES_FILENAME
    boxes = boxes if boxes.is_file() else None
    return DatasetEntry(
        capture_id=capture_id,
        treatment=treatment,
        category=category,
        white=photos["white"],
        infrared=photos["infrared"],
        turquoise=photos["turquoise"],
        mask=mask,
        boxes=boxes,
    )


def _load_from_manifest(root: Path, manifest: Path) -> DatasetIndex:
    warnings: list[str] = []
    errors: list[str] = []
    entries: list[DatasetEntry] = []
    seen: set[str] = set()
    keys = {"treatment", "category", "white", "ir", "turquoise", "mask", "boxes"}
    for line_no, raw in enumerate(manifest.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        capture_id = fields[0]
        if capture_id in seen:
            errors.append(f"{capture_id}: duplicate capture id (manifest line {line_no})")
            continue
        seen.add(capture_id)
        values: dict[str, str] = {}
        for tok in fields[1:]:
            key, sep, val = tok.partition("=")
            if not sep or key not in keys:
                raise AnnotationParseError(f"bad manifest field {tok!r}", line_no)
            values[key] = val
        treatment = Treatment(values["treatment"]) if "treatment" in values else None
        category = Category(values["category"]) if "category" in values else None

        def resolve(key: str) -> Path | None:
            if key not in values:
                if key in ("white", "ir", "turquoise"):
                    warnings.append(f"{capture_id}: missing {key}")
                return None
            p = root / values[key]
            if not p.is_file():
                warnings.append(f"{capture_id}: missing {values[key]}")
                return None
            return p

        mask = resolve("mask")
        if mask is not None:
            err = _verify_mask_readable(mask)
            if err:
                errors.append(f"{capture_id}: {err}")
                mask = None
        entries.append(
            DatasetEntry(
                capture_id=capture_id,
                treatment=treatment,
                category=category,
                white=resolve("white"),
                infrared=resolve("ir"),
                turquoise=resolve("turquoise"),
                mask=mask,
                boxes=resolve("boxes"),
            )
        )
    entries.sort(key=lambda e: e.capture_id)
    return DatasetIndex(root, tuple(entries), tuple(warnings), tuple(errors))


def load_dataset(root: str | Path) -> DatasetIndex:
    """Index a dataset tree (or its manifest.txt override).

    Missing photos are warnings (the capture is kept with a partial
    triplet); an unreadable mask is an error entry. Entries are sorted by
    capture_id, so loading is order-stable.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    manifest = root / MANIFEST_FILENAME
    if manifest.is_file():
        return _load_from_manifest(root, manifest)

    warnings: list[str] = []
    errors: list[str] = []
    found: list[tuple[str, Path, Treatment | None, Category | None]] = []

    def is_capture_dir(d: Path) -> bool:
        return any((d / f).is_file() for f in (*PHOTO_FILENAMES.values(), MASK_FILENAME))

    treatment_names = {t.value: t for t in Treatment}
    category_names = {c.value: c for c in Category}
    for child in sorted(root.iterdir()):
        if not child.is_dir():
            continue
        if child.name in treatment_names:
            treatment = treatment_names[child.name]
            for cat_dir in sorted(child.iterdir()):
                if not cat_dir.is_dir():
                    continue
                category = category_names.get(cat_dir.name)
                if category is None:
                    warnings.append(f"unrecognized category directory {cat_dir.name!r}")
                    continue
                for cap_dir in sorted(cat_dir.iterdir()):
                    if cap_dir.is_dir():
                        found.append((cap_dir.name, cap_dir, treatment, category))
        elif is_capture_dir(child):
            found.append((child.name, child, None, None))

    entries: list[DatasetEntry] = []
    seen: set[str] = set()
    for capture_id, directory, treatment, category in found:
        if capture_id in seen:
            errors.append(f"{capture_id}: duplicate capture id ({directory})")
            continue
        seen.add(capture_id)
        entries.append(_build_entry(capture_id, directory, treatment, category, warnings, errors))
    entries.sort(key=lambda e: e.capture_id)
    for message in warnings:
        log.warning("%s", message)
    return DatasetIndex(root, tuple(entries), tuple(warnings), tuple(errors))


# ---------------------------------------------------------------------------
# PNG interchange for photos and class masks
# ---------------------------------------------------------------------------

def write_rgb_png(image: np.ndarray, path: str | Path) -> None:
    arr = _require_rgb(image)
    Image.fromarray(arr, mode="RGB").save(Path(path), format="PNG")


def read_rgb_png(path: str | Path, strict: bool = False) -> np.ndarray:
    """Read a photo as an (h, w, 3) uint8 array.

    strict=True requires true RGB (used for class masks); otherwise any
    mode Pillow can convert is accepted.
    """
    with Image.open(Path(path)) as im:
        if im.mode != "RGB":
            if strict:
                raise RangeError(f"{path}: expected RGB PNG, got mode {im.mode}")
            im = im.convert("RGB")
        return np.asarray(im, dtype=np.uint8)


def write_class_mask_png(mask: ClassMask, path: str | Path) -> None:
    write_rgb_png(encode_class_mask(mask), path)


def read_class_mask_png(path: str | Path) -> ClassMask:
    return decode_class_mask(read_rgb_png(path, strict=True))
