"""Multispectral Varroa mite screening toolkit.

Detection of mites on honey bees from capture triplets (white / 780 nm
infrared / 500 nm turquoise illumination) via background subtraction and
spectral-difference arithmetic, plus the object-level satisfied-bee
metric, dataset format handling, and a deterministic synthetic-scene
generator for end-to-end verification without the physical rig.
"""
from .annotations import (
    Category,
    ClassMask,
    DatasetEntry,
    DatasetIndex,
    PixelClass,
    Treatment,
    YoloBox,
    YoloClass,
    decode_class_mask,
    encode_class_mask,
    load_dataset,
    mite_mask_of,
    parse_yolo_file,
    parse_yolo_line,
)
from .errors import (
    AnnotationParseError,
    DatasetError,
    DetectionError,
    DimensionError,
    ParameterError,
    RangeError,
    SceneSpecError,
    VarroaScanError,
)
from .metrics import (
    EvalReport,
    SbmCounts,
    aggregate,
    evaluate_image,
    filter_regions,
    sbm_match,
)
from .pipeline import (
    DEFAULT_CONFIG,
    CaptureTriplet,
    DetectionResult,
    PipelineConfig,
    detect_mites,
    preprocess_channel,
    run_batch,
)
from .raster import (
    BinaryMask,
    GrayImage,
    Region,
    SeShape,
    SignedImage,
    StructuringElement,
    absolute,
    connected_components,
    morphological_open,
    scale,
    subtract,
    subtract_saturating,
    threshold,
    to_grayscale,
)
from .synth import (
    BeeShape,
    ChannelLevels,
    DebrisShape,
    Difficulty,
    MiteShape,
    SceneSpec,
    SyntheticScene,
    generate_scene,
    generate_suite,
)

__version__ = "0.1.0"
