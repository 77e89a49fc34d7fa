"""The multispectral mite detector.

One trigger event yields three co-registered photos of the same scene
under white, 780 nm infrared and 500 nm turquoise illumination. Mites are
nearly indistinguishable from bees at 500 nm but sit close to the
background level at 780 nm, while bee bodies light up strongly in the
infrared difference. The detector exploits exactly that:

1. ir_diff   = |gray(capture.infrared) - gray(background.infrared)|
2. tq_mask   = |gray(capture.turquoise) - gray(background.turquoise)|
               thresholded at diff_threshold_turquoise, promoted to {0, 255}
3. combined  = saturating(tq_mask - ir_gain * ir_diff)
4. cleaned   = opening + final threshold (order configurable; identical
               for flat elements)
5. regions   = 4-connected components of cleaned, area-filtered

The turquoise mask is the whole-insect silhouette; scaled ir_diff deletes
the bee body from it; what survives is mite-shaped. Every stage is pure,
so captures may be processed concurrently.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import DatasetError, DetectionError, DimensionError, ParameterError, VarroaScanError
from .metrics import filter_regions
from .raster import (
    BinaryMask,
    GrayImage,
    Region,
    SeShape,
    StructuringElement,
    _require_rgb,
    absolute,
    connected_components,
    mask_from_regions,
    mask_to_intensity,
    morphological_open,
    morphological_open_gray,
    scale,
    subtract,
    subtract_saturating,
    threshold,
    to_grayscale,
)

__all__ = [
    "CaptureTriplet",
    "PipelineConfig",
    "DetectionResult",
    "DEFAULT_CONFIG",
    "preprocess_channel",
    "detect_mites",
    "run_batch",
    "parse_config_text",
    "load_config_file",
    "apply_config_overrides",
    "config_to_text",
]

NATIVE_WIDTH = 1116
NATIVE_HEIGHT = 300


@dataclass(frozen=True, eq=False)
class CaptureTriplet:
    """The three photos of one trigger event, plus an identifier.

    All three share identical dimensions; any consistent size is accepted
    (native capture size is 1116 x 300).
    """

    white: np.ndarray
    infrared: np.ndarray
    turquoise: np.ndarray
    capture_id: str = ""

    def __post_init__(self):
        arrays = {}
        for name in ("white", "infrared", "turquoise"):
            value = getattr(self, name)
            if value is None:
                raise DatasetError(f"capture {self.capture_id!r}: missing {name} channel")
            arr = _require_rgb(value, f"{name} photo")
            arr = np.array(arr, copy=True)
            arr.setflags(write=False)
            arrays[name] = arr
        shapes = {a.shape for a in arrays.values()}
        if len(shapes) != 1:
            raise DimensionError(
                f"capture {self.capture_id!r}: illumination images disagree in size: "
                + ", ".join(str(s) for s in sorted(shapes))
            )
        for name, arr in arrays.items():
            object.__setattr__(self, name, arr)

    @property
    def width(self) -> int:
        return self.white.shape[1]

    @property
    def height(self) -> int:
        return self.white.shape[0]


def _parse_element(text: str) -> StructuringElement:
    shape_name, sep, radius_text = text.strip().lower().partition(":")
    if not sep:
        raise ParameterError(
            f"opening_element must look like 'square:1' or 'cross:2', got {text!r}"
        )
    try:
        shape = SeShape(shape_name)
    except ValueError:
        raise ParameterError(f"unknown structuring element shape {shape_name!r}") from None
    try:
        radius = int(radius_text)
    except ValueError:
        raise ParameterError(f"bad structuring element radius {radius_text!r}") from None
    return StructuringElement(radius=radius, shape=shape)


def _element_text(se: StructuringElement) -> str:
    return f"{se.shape.value}:{se.radius}"


@dataclass(frozen=True)
class PipelineConfig:
    """Detector knobs. The right thresholds differ per installation, so
    everything is configuration, never a constant."""

    diff_threshold_ir: int = 25
    diff_threshold_turquoise: int = 25
    ir_gain: float = 2.0
    final_threshold: int = 10
    opening_element: StructuringElement = field(default_factory=StructuringElement)
    min_mite_area: int = 20
    open_before_threshold: bool = False
    threshold_ir_diff: bool = False

    def __post_init__(self):
        for name in ("diff_threshold_ir", "diff_threshold_turquoise", "final_threshold"):
            value = getattr(self, name)
            if not isinstance(value, int) or not 0 <= value <= 255:
                raise ParameterError(f"{name} must be an integer in [0, 255], got {value!r}")
        if self.ir_gain < 0:
            raise ParameterError(f"ir_gain must be non-negative, got {self.ir_gain}")
        if not isinstance(self.min_mite_area, int) or self.min_mite_area < 0:
            raise ParameterError(f"min_mite_area must be a non-negative integer, got {self.min_mite_area!r}")
        if not isinstance(self.opening_element, StructuringElement):
            raise ParameterError("opening_element must be a StructuringElement")


DEFAULT_CONFIG = PipelineConfig()

_BOOL_VALUES = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _coerce_config_value(name: str, text: str):
    text = text.strip()
    if name in ("diff_threshold_ir", "diff_threshold_turquoise", "final_threshold",
                "min_mite_area"):
        try:
            return int(text)
        except ValueError:
            raise ParameterError(f"{name} expects an integer, got {text!r}") from None
    if name == "ir_gain":
        try:
            return float(text)
        except ValueError:
            raise ParameterError(f"ir_gain expects a number, got {text!r}") from None
    if name in ("open_before_threshold", "threshold_ir_diff"):
        try:
            return _BOOL_VALUES[text.lower()]
        except KeyError:
            raise ParameterError(f"{name} expects true/false, got {text!r}") from None
    if name == "opening_element":
        return _parse_element(text)
    raise ParameterError(f"unknown config key {name!r}")


_CONFIG_KEYS = tuple(f.name for f in fields(PipelineConfig))


def parse_config_text(text: str, base: PipelineConfig = DEFAULT_CONFIG) -> PipelineConfig:
    """Parse flat 'key = value' lines ('#' starts a comment)."""
    updates = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ParameterError(f"config line {line_no}: expected 'key = value', got {raw!r}")
        if key not in _CONFIG_KEYS:
            raise ParameterError(f"config line {line_no}: unknown key {key!r}")
        updates[key] = _coerce_config_value(key, value)
    return replace(base, **updates)


def load_config_file(path: str | Path, base: PipelineConfig = DEFAULT_CONFIG) -> PipelineConfig:
    return parse_config_text(Path(path).read_text(), base=base)


def apply_config_overrides(config: PipelineConfig, pairs: list[str]) -> PipelineConfig:
    """Apply 'key=value' override strings (the CLI's --set)."""
    updates = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ParameterError(f"override must look like key=value, got {pair!r}")
        if key not in _CONFIG_KEYS:
            raise ParameterError(f"unknown config key {key!r}")
        updates[key] = _coerce_config_value(key, value)
    return replace(config, **updates)


def config_to_text(config: PipelineConfig) -> str:
    lines = []
    for f in fields(PipelineConfig):
        value = getattr(config, f.name)
        if isinstance(value, StructuringElement):
            value = _element_text(value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Detection
# ---------------------------------------------------------------------------

def preprocess_channel(photo: np.ndarray, background: np.ndarray, t: int) -> BinaryMask:
    """Change mask of one illumination channel vs the static background:
    threshold(|gray(photo) - gray(background)|, t)."""
    return threshold(absolute(subtract(to_grayscale(photo), to_grayscale(background))), t)


def _check_pair(capture: CaptureTriplet, background: CaptureTriplet) -> None:
    if (capture.width, capture.height) != (background.width, background.height):
        raise DimensionError(
            f"capture {capture.capture_id!r} is {capture.width}x{capture.height} but "
            f"background is {background.width}x{background.height}"
        )


@dataclass(frozen=True)
class DetectionResult:
    """Output of one detection: the mite mask, surviving regions, and the
    exact configuration that produced them."""

    mite_mask: BinaryMask
    regions: tuple[Region, ...]
    config_used: PipelineConfig
    capture_id: str


def detect_mites(
    capture: CaptureTriplet, background: CaptureTriplet, config: PipelineConfig = DEFAULT_CONFIG
) -> DetectionResult:
    """Run the detector on one capture against the static background."""
    _check_pair(capture, background)

    ir_diff = absolute(
        subtract(to_grayscale(capture.infrared), to_grayscale(background.infrared))
    )
    if config.threshold_ir_diff:
        ir_term: GrayImage = mask_to_intensity(threshold(ir_diff, config.diff_threshold_ir))
    else:
        ir_term = ir_diff

    tq_mask = preprocess_channel(
        capture.turquoise, background.turquoise, config.diff_threshold_turquoise
    )
    combined = subtract_saturating(mask_to_intensity(tq_mask), scale(ir_term, config.ir_gain))

    if config.open_before_threshold:
        cleaned = threshold(
            morphological_open_gray(combined, config.opening_element), config.final_threshold
        )
    else:
        cleaned = morphological_open(
            threshold(combined, config.final_threshold), config.opening_element
        )

    regions = filter_regions(connected_components(cleaned), config.min_mite_area)
    mite_mask = mask_from_regions(regions, capture.width, capture.height)
    return DetectionResult(
        mite_mask=mite_mask,
        regions=tuple(regions),
        config_used=config,
        capture_id=capture.capture_id,
    )


def run_batch(
    captures: list[CaptureTriplet],
    background: CaptureTriplet,
    config: PipelineConfig = DEFAULT_CONFIG,
) -> list[DetectionResult]:
    """detect_mites over a list, results in input order; the first failing
    capture aborts the batch with its id attached."""
    results = []
    for capture in captures:
        try:
            results.append(detect_mites(capture, background, config))
        except VarroaScanError as exc:
            raise DetectionError(capture.capture_id, str(exc)) from exc
    return results
