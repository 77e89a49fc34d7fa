"""Deterministic synthetic capture triplets with exact ground truth.

Scenes are the desk-scale stand-in for the physical rig: flat-intensity
ellipse "bees" and disc "mites" on a uniform background, rendered once per
illumination channel, plus uniform per-pixel noise. The spectral model
mirrors the real contrast structure the detector relies on:

* turquoise (500 nm): a mite's level matches its host bee's, so the mite
  hides inside the insect silhouette;
* infrared (780 nm): the mite sits near the background level while bee
  bodies are bright, so the infrared difference lights up bees only;
* white: carried for completeness, unused by detection.

Optional "debris" specks (pollen, small insects) share the mite's
spectral signature but are absent from ground truth — the natural
false-positive source.

Everything derives from a SplitMix64 hash keyed on (seed, shot, channel,
pixel), so output is bit-identical across platforms and runs. The capture
and background triplets of a scene use the same seed but different shot
keys: two independent noise realizations of one static scene, exactly
like two photos taken seconds apart.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .annotations import (
    BOXES_FILENAME,
    MASK_FILENAME,
    PHOTO_FILENAMES,
    Category,
    ClassMask,
    PixelClass,
    Treatment,
    YoloBox,
    YoloClass,
    format_yolo_line,
    write_class_mask_png,
    write_rgb_png,
)
from .errors import ParameterError, SceneSpecError
from .pipeline import NATIVE_HEIGHT, NATIVE_WIDTH, CaptureTriplet

__all__ = [
    "ChannelLevels",
    "BeeShape",
    "MiteShape",
    "DebrisShape",
    "SceneSpec",
    "Footprint",
    "SyntheticScene",
    "Difficulty",
    "SplitMix64",
    "render_scene",
    "generate_scene",
    "generate_suite",
    "export_suite",
    "BACKGROUND_CAPTURE_ID",
]

BACKGROUND_CAPTURE_ID = "background"

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_SHOT_CAPTURE = 0x63617074757265
_SHOT_BACKGROUND = 0x6261636B67726F
_CHANNEL_SALT = (0x7768697465, 0x696E667261, 0x747572710A)  # white, infrared, turquoise


def _finalize(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer over uint64 arrays (wrapping arithmetic)."""
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def _hash_u64(value: int) -> int:
    out = _finalize(np.array([(value + _GOLDEN) & _MASK64], dtype=np.uint64))
    return int(out[0])


class SplitMix64:
    """Tiny portable PRNG for scalar draws (placement, counts, levels)."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        out = _finalize(np.array([self._state], dtype=np.uint64))
        return int(out[0])

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive."""
        if hi < lo:
            raise ParameterError(f"empty range [{lo}, {hi}]")
        return lo + self.next_u64() % (hi - lo + 1)

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * (self.next_u64() / float(1 << 64))

    def choice(self, seq):
        return seq[self.randint(0, len(seq) - 1)]


def _noise_field(
    seed: int, shot: int, channel: int, width: int, height: int, amplitude: int
) -> np.ndarray:
    """Uniform integer noise in [-amplitude, amplitude], int16, keyed per pixel."""
    if amplitude == 0:
        return np.zeros((height, width), dtype=np.int16)
    base = _hash_u64(_hash_u64(_hash_u64(seed & _MASK64) ^ shot) ^ _CHANNEL_SALT[channel])
    idx = np.arange(1, width * height + 1, dtype=np.uint64)
    states = np.uint64(base) + idx * np.uint64(_GOLDEN)
    draws = _finalize(states)
    span = np.uint64(2 * amplitude + 1)
    vals = (draws % span).astype(np.int16) - np.int16(amplitude)
    return vals.reshape(height, width)


# ---------------------------------------------------------------------------
# Scene specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelLevels:
    """Flat intensity per illumination channel."""

    white: int
    infrared: int
    turquoise: int

    def __post_init__(self):
        for name in ("white", "infrared", "turquoise"):
            v = getattr(self, name)
            if not 0 <= v <= 255:
                raise SceneSpecError(f"{name} level {v} outside [0, 255]")

    def get(self, channel: str) -> int:
        return getattr(self, channel)


@dataclass(frozen=True)
class BeeShape:
    center: tuple[float, float]
    radii: tuple[float, float]
    levels: ChannelLevels


@dataclass(frozen=True)
class MiteShape:
    center: tuple[float, float]
    radius: float
    levels: ChannelLevels
    host: int | None = None


@dataclass(frozen=True)
class DebrisShape:
    center: tuple[float, float]
    radius: float
    levels: ChannelLevels


@dataclass(frozen=True)
class SceneSpec:
    """Complete recipe for one scene; rendering is a pure function of it."""

    seed: int
    dims: tuple[int, int] = (NATIVE_WIDTH, NATIVE_HEIGHT)
    bees: tuple[BeeShape, ...] = ()
    mites: tuple[MiteShape, ...] = ()
    debris: tuple[DebrisShape, ...] = ()
    noise_amplitude: int = 0
    background: ChannelLevels = ChannelLevels(70, 28, 36)
    ir_contrast_floor: int = 60

    def __post_init__(self):
        object.__setattr__(self, "bees", tuple(self.bees))
        object.__setattr__(self, "mites", tuple(self.mites))
        object.__setattr__(self, "debris", tuple(self.debris))
        width, height = self.dims
        if width < 1 or height < 1:
            raise SceneSpecError(f"dims must be positive, got {self.dims}")
        if not 0 <= self.noise_amplitude <= 127:
            raise SceneSpecError(f"noise_amplitude {self.noise_amplitude} outside [0, 127]")
        for i, bee in enumerate(self.bees):
            rx, ry = bee.radii
            if rx <= 0 or ry <= 0:
                raise SceneSpecError(f"bee {i}: radii must be positive")
            self._check_in_bounds(f"bee {i}", bee.center, max(rx, ry))
        for i, mite in enumerate(self.mites):
            if mite.radius <= 0:
                raise SceneSpecError(f"mite {i}: radius must be positive")
            self._check_in_bounds(f"mite {i}", mite.center, mite.radius)
            if mite.host is not None:
                if not 0 <= mite.host < len(self.bees):
                    raise SceneSpecError(f"mite {i}: host bee index {mite.host} out of range")
                host = self.bees[mite.host]
                tq_gap = abs(mite.levels.turquoise - host.levels.turquoise)
                if tq_gap > self.noise_amplitude:
                    raise SceneSpecError(
                        f"mite {i}: turquoise level differs from host by {tq_gap}, "
                        f"must be <= noise amplitude ({self.noise_amplitude})"
                    )
                ir_gap = abs(mite.levels.infrared - host.levels.infrared)
                if ir_gap < self.ir_contrast_floor:
                    raise SceneSpecError(
                        f"mite {i}: infrared contrast to host is {ir_gap}, "
                        f"must be >= {self.ir_contrast_floor}"
                    )
        for i, speck in enumerate(self.debris):
            if speck.radius <= 0:
                raise SceneSpecError(f"debris {i}: radius must be positive")
            self._check_in_bounds(f"debris {i}", speck.center, speck.radius)

    def _check_in_bounds(self, what: str, center: tuple[float, float], reach: float) -> None:
        width, height = self.dims
        cx, cy = center
        if cx + reach < 0 or cx - reach > width - 1 or cy + reach < 0 or cy - reach > height - 1:
            raise SceneSpecError(f"{what}: shape at {center} lies entirely outside {self.dims}")


@dataclass(frozen=True)
class Footprint:
    """Rendered pixel footprint of one shape: tight inclusive bbox + area."""

    bbox: tuple[int, int, int, int]
    area: int


@dataclass(frozen=True)
class SyntheticScene:
    spec: SceneSpec
    capture: CaptureTriplet
    background: CaptureTriplet
    truth: ClassMask
    bee_footprints: tuple[Footprint, ...]
    mite_footprints: tuple[Footprint, ...]

    @property
    def capture_id(self) -> str:
        return self.capture.capture_id


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _disc_footprint(dims: tuple[int, int], center: tuple[float, float], r: float) -> np.ndarray:
    width, height = dims
    cx, cy = center
    x0 = max(int(math.floor(cx - r)), 0)
    x1 = min(int(math.ceil(cx + r)), width - 1)
    y0 = max(int(math.floor(cy - r)), 0)
    y1 = min(int(math.ceil(cy + r)), height - 1)
    out = np.zeros((height, width), dtype=bool)
    if x1 < x0 or y1 < y0:
        return out
    ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    out[y0 : y1 + 1, x0 : x1 + 1] = (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r
    return out


def _ellipse_footprint(
    dims: tuple[int, int], center: tuple[float, float], radii: tuple[float, float]
) -> np.ndarray:
    width, height = dims
    cx, cy = center
    rx, ry = radii
    x0 = max(int(math.floor(cx - rx)), 0)
    x1 = min(int(math.ceil(cx + rx)), width - 1)
    y0 = max(int(math.floor(cy - ry)), 0)
    y1 = min(int(math.ceil(cy + ry)), height - 1)
    out = np.zeros((height, width), dtype=bool)
    if x1 < x0 or y1 < y0:
        return out
    ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    out[y0 : y1 + 1, x0 : x1 + 1] = ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 <= 1.0
    return out


def _footprint_info(mask: np.ndarray, what: str) -> Footprint:
    ys, xs = np.nonzero(mask)
    if xs.size == 0:
        raise SceneSpecError(f"{what}: footprint is empty after clipping to the image")
    return Footprint(
        bbox=(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())),
        area=int(xs.size),
    )


_CHANNEL_NAMES = ("white", "infrared", "turquoise")


def _to_rgb(plane: np.ndarray) -> np.ndarray:
    return np.repeat(plane[:, :, np.newaxis], 3, axis=2)


def render_scene(spec: SceneSpec) -> SyntheticScene:
    """Render a scene spec into its capture/background triplets and truth."""
    width, height = spec.dims
    bee_masks = [_ellipse_footprint(spec.dims, b.center, b.radii) for b in spec.bees]
    mite_masks = [_disc_footprint(spec.dims, m.center, m.radius) for m in spec.mites]
    debris_masks = [_disc_footprint(spec.dims, d.center, d.radius) for d in spec.debris]
    bee_footprints = tuple(
        _footprint_info(m, f"bee {i}") for i, m in enumerate(bee_masks)
    )
    mite_footprints = tuple(
        _footprint_info(m, f"mite {i}") for i, m in enumerate(mite_masks)
    )
    for i, m in enumerate(debris_masks):
        _footprint_info(m, f"debris {i}")

    capture_planes = {}
    background_planes = {}
    for ch_index, ch_name in enumerate(_CHANNEL_NAMES):
        plane = np.full((height, width), spec.background.get(ch_name), dtype=np.int16)
        # paint order fixes occlusion: debris under bees, mites on top
        for speck, mask in zip(spec.debris, debris_masks):
            plane[mask] = speck.levels.get(ch_name)
        for bee, mask in zip(spec.bees, bee_masks):
            plane[mask] = bee.levels.get(ch_name)
        for mite, mask in zip(spec.mites, mite_masks):
            plane[mask] = mite.levels.get(ch_name)
        noise_c = _noise_field(spec.seed, _SHOT_CAPTURE, ch_index, width, height,
                               spec.noise_amplitude)
        noise_b = _noise_field(spec.seed, _SHOT_BACKGROUND, ch_index, width, height,
                               spec.noise_amplitude)
        capture_planes[ch_name] = np.clip(plane + noise_c, 0, 255).astype(np.uint8)
        flat = np.full((height, width), spec.background.get(ch_name), dtype=np.int16)
        background_planes[ch_name] = np.clip(flat + noise_b, 0, 255).astype(np.uint8)

    labels = np.zeros((height, width), dtype=np.uint8)
    for mask in bee_masks:
        labels[mask] = int(PixelClass.BEE)
    for mask in mite_masks:
        labels[mask] = int(PixelClass.MITE)

    capture_id = f"scene_{spec.seed & _MASK64:08d}"
    capture = CaptureTriplet(
        white=_to_rgb(capture_planes["white"]),
        infrared=_to_rgb(capture_planes["infrared"]),
        turquoise=_to_rgb(capture_planes["turquoise"]),
        capture_id=capture_id,
    )
    background = CaptureTriplet(
        white=_to_rgb(background_planes["white"]),
        infrared=_to_rgb(background_planes["infrared"]),
        turquoise=_to_rgb(background_planes["turquoise"]),
        capture_id=f"{capture_id}_background",
    )
    return SyntheticScene(
        spec=spec,
        capture=capture,
        background=background,
        truth=ClassMask(labels),
        bee_footprints=bee_footprints,
        mite_footprints=mite_footprints,
    )


def generate_scene(spec: SceneSpec) -> tuple[CaptureTriplet, CaptureTriplet, ClassMask]:
    """Capture triplet, background triplet and ground-truth mask for a spec."""
    scene = render_scene(spec)
    return scene.capture, scene.background, scene.truth


# ---------------------------------------------------------------------------
# Difficulty presets
# ---------------------------------------------------------------------------

class Difficulty(enum.Enum):
    CLEAN = "clean"
    NOISY = "noisy"
    CROWDED = "crowded"


_BACKGROUND = ChannelLevels(white=70, infrared=28, turquoise=36)

# detected blobs survive a 3x3 opening for radius >= 1.5 (see tests)
_CLEAN_MITE_RADII = (2.5, 3.0, 3.5, 4.0)
_NOISY_MITE_RADII = (1.5, 2.0, 2.5, 3.0, 3.5)
_DEBRIS_RADII = (1.0, 1.5, 2.0, 2.5)

_MAX_PLACEMENT_TRIES = 500


def _boxes_overlap(a: tuple[float, float, float, float],
                   b: tuple[float, float, float, float]) -> bool:
    return not (a[2] < b[0] or b[2] < a[0] or a[3] < b[1] or b[3] < a[1])


def _place_bees(
    rng: SplitMix64, dims: tuple[int, int], count: int,
    ir_range: tuple[int, int], allow_overlap: bool,
) -> list[BeeShape]:
    width, height = dims
    bees: list[BeeShape] = []
    boxes: list[tuple[float, float, float, float]] = []
    max_rx = max(min(46, width // 8), 8)
    max_ry = max(min(30, height // 6), 8)
    for _ in range(count):
        for _attempt in range(_MAX_PLACEMENT_TRIES):
            rx = rng.randint(min(28, max_rx - 1), max_rx)
            ry = rng.randint(min(16, max_ry - 1), max_ry)
            cx = rng.randint(rx + 2, width - rx - 3)
            cy = rng.randint(ry + 2, height - ry - 3)
            box = (cx - rx - 3, cy - ry - 3, cx + rx + 3, cy + ry + 3)
            if allow_overlap or not any(_boxes_overlap(box, other) for other in boxes):
                boxes.append(box)
                bees.append(
                    BeeShape(
                        center=(cx, cy),
                        radii=(rx, ry),
                        levels=ChannelLevels(
                            white=rng.randint(140, 200),
                            infrared=rng.randint(*ir_range),
                            turquoise=rng.randint(170, 215),
                        ),
                    )
                )
                break
        else:
            raise SceneSpecError(
                f"could not place {count} bees in a {width}x{height} scene"
            )
    return bees


def _place_mites(
    rng: SplitMix64, bees: list[BeeShape], count: int, radii_menu: tuple[float, ...],
) -> list[MiteShape]:
    mites: list[MiteShape] = []
    for _ in range(count):
        for _attempt in range(_MAX_PLACEMENT_TRIES):
            host_index = rng.randint(0, len(bees) - 1)
            host = bees[host_index]
            radius = rng.choice(radii_menu)
            angle = rng.uniform(0.0, 2.0 * math.pi)
            reach = rng.uniform(0.0, 0.7)
            rx, ry = host.radii
            cx = round(host.center[0] + reach * (rx - radius - 2) * math.cos(angle))
            cy = round(host.center[1] + reach * (ry - radius - 2) * math.sin(angle))
            if any(
                math.hypot(cx - m.center[0], cy - m.center[1]) < radius + m.radius + 8
                for m in mites
            ):
                continue
            mites.append(
                MiteShape(
                    center=(cx, cy),
                    radius=radius,
                    levels=ChannelLevels(
                        white=rng.randint(80, 110),
                        infrared=max(_BACKGROUND.infrared + rng.randint(-6, 6), 0),
                        turquoise=host.levels.turquoise,
                    ),
                    host=host_index,
                )
            )
            break
        else:
            raise SceneSpecError("could not place mites with the required separation")
    return mites


def _place_debris(
    rng: SplitMix64, dims: tuple[int, int], count: int,
    bees: list[BeeShape], mites: list[MiteShape],
) -> list[DebrisShape]:
    width, height = dims
    specks: list[DebrisShape] = []
    bee_boxes = [
        (b.center[0] - b.radii[0], b.center[1] - b.radii[1],
         b.center[0] + b.radii[0], b.center[1] + b.radii[1])
        for b in bees
    ]
    for _ in range(count):
        for _attempt in range(_MAX_PLACEMENT_TRIES):
            radius = rng.choice(_DEBRIS_RADII)
            cx = rng.randint(5, width - 6)
            cy = rng.randint(5, height - 6)
            pad = radius + 4
            box = (cx - pad, cy - pad, cx + pad, cy + pad)
            if any(_boxes_overlap(box, bb) for bb in bee_boxes):
                continue
            if any(
                math.hypot(cx - s.center[0], cy - s.center[1]) < radius + s.radius + 6
                for s in specks
            ):
                continue
            specks.append(
                DebrisShape(
                    center=(cx, cy),
                    radius=radius,
                    levels=ChannelLevels(
                        white=rng.randint(100, 140),
                        infrared=max(_BACKGROUND.infrared + rng.randint(-6, 6), 0),
                        turquoise=rng.randint(160, 210),
                    ),
                )
            )
            break
        else:
            raise SceneSpecError("could not place debris away from bees")
    return specks


def build_scene_spec(
    seed: int, difficulty: Difficulty, dims: tuple[int, int] = (NATIVE_WIDTH, NATIVE_HEIGHT)
) -> SceneSpec:
    """Deterministically derive a scene spec from (seed, difficulty, dims)."""
    rng = SplitMix64(seed)
    if difficulty is Difficulty.CLEAN:
        bees = _place_bees(rng, dims, rng.randint(2, 3), ir_range=(200, 235),
                           allow_overlap=False)
        mites = _place_mites(rng, bees, rng.randint(1, 2), _CLEAN_MITE_RADII)
        debris: list[DebrisShape] = []
        noise = 4
    elif difficulty is Difficulty.NOISY:
        bees = _place_bees(rng, dims, rng.randint(2, 4), ir_range=(210, 240),
                           allow_overlap=False)
        mites = _place_mites(rng, bees, rng.randint(1, 3), _NOISY_MITE_RADII)
        debris = _place_debris(rng, dims, rng.randint(6, 14), bees, mites)
        noise = 28
    elif difficulty is Difficulty.CROWDED:
        bees = _place_bees(rng, dims, rng.randint(5, 8), ir_range=(210, 240),
                           allow_overlap=True)
        mites = _place_mites(rng, bees, rng.randint(2, 5), (2.5, 3.0, 3.5))
        debris = _place_debris(rng, dims, rng.randint(2, 5), bees, mites)
        noise = 12
    else:  # pragma: no cover - exhaustive enum
        raise ParameterError(f"unknown difficulty {difficulty!r}")
    return SceneSpec(
        seed=seed,
        dims=dims,
        bees=tuple(bees),
        mites=tuple(mites),
        debris=tuple(debris),
        noise_amplitude=noise,
        background=_BACKGROUND,
    )


def generate_suite(
    n: int,
    base_seed: int,
    difficulty: Difficulty = Difficulty.CLEAN,
    dims: tuple[int, int] = (NATIVE_WIDTH, NATIVE_HEIGHT),
) -> list[SyntheticScene]:
    """n scenes seeded base_seed, base_seed+1, ..., base_seed+n-1."""
    if n < 0:
        raise ParameterError(f"scene count must be non-negative, got {n}")
    return [
        render_scene(build_scene_spec(base_seed + i, difficulty, dims)) for i in range(n)
    ]


# ---------------------------------------------------------------------------
# Export to the dataset layout
# ---------------------------------------------------------------------------

def _scene_category(scene: SyntheticScene) -> Category:
    has_bees = bool(scene.spec.bees)
    has_mites = bool(scene.spec.mites)
    if has_bees and has_mites:
        return Category.BEE_WITH_MITE
    if has_bees:
        return Category.BEE
    return Category.MITE


def _bbox_to_yolo(
    bbox: tuple[int, int, int, int], dims: tuple[int, int], class_id: YoloClass
) -> YoloBox:
    width, height = dims
    x0, y0, x1, y1 = bbox
    w = (x1 - x0 + 1) / width
    h = (y1 - y0 + 1) / height
    cx = (x0 + x1 + 1) / (2 * width)
    cy = (y0 + y1 + 1) / (2 * height)
    return YoloBox(class_id, cx, cy, w, h)


def _write_triplet(triplet: CaptureTriplet, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    write_rgb_png(triplet.white, directory / PHOTO_FILENAMES["white"])
    write_rgb_png(triplet.infrared, directory / PHOTO_FILENAMES["infrared"])
    write_rgb_png(triplet.turquoise, directory / PHOTO_FILENAMES["turquoise"])


def export_suite(
    scenes: list[SyntheticScene], root: str | Path, treatment: Treatment = Treatment.BEFORE
) -> list[Path]:
    """Write scenes in the canonical dataset layout; returns written dirs.

    A shared static background capture (the first scene's background
    triplet, which depends only on the suite's base seed) is written to
    ``root/background/`` so the tree is directly consumable by detection.
    """
    root = Path(root)
    written = []
    for scene in scenes:
        directory = (
            root / treatment.value / _scene_category(scene).value / scene.capture_id
        )
        _write_triplet(scene.capture, directory)
        write_class_mask_png(scene.truth, directory / MASK_FILENAME)
        dims = scene.spec.dims
        lines = [
            format_yolo_line(_bbox_to_yolo(fp.bbox, dims, YoloClass.BEE))
            for fp in scene.bee_footprints
        ]
        lines += [
            format_yolo_line(_bbox_to_yolo(fp.bbox, dims, YoloClass.MITE))
            for fp in scene.mite_footprints
        ]
        (directory / BOXES_FILENAME).write_text("\n".join(lines) + ("\n" if lines else ""))
        written.append(directory)
    if scenes:
        bg_dir = root / BACKGROUND_CAPTURE_ID
        _write_triplet(scenes[0].background, bg_dir)
        written.append(bg_dir)
    return written
