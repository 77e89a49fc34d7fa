from __future__ import annotations

import numpy as np
import pytest

from oracles import disc_pixels

from varroa_scan.errors import DatasetError, DetectionError, DimensionError, ParameterError
from varroa_scan.pipeline import (
    DEFAULT_CONFIG,
    CaptureTriplet,
    PipelineConfig,
    apply_config_overrides,
    config_to_text,
    detect_mites,
    load_config_file,
    parse_config_text,
    preprocess_channel,
    run_batch,
)
from varroa_scan.raster import SeShape, StructuringElement
from varroa_scan.synth import (
    BeeShape,
    ChannelLevels,
    Difficulty,
    MiteShape,
    SceneSpec,
    build_scene_spec,
    render_scene,
)


def flat_rgb(shape: tuple[int, int], value: int) -> np.ndarray:
    return np.full((*shape, 3), value, dtype=np.uint8)


def triplet(shape=(20, 30), value=40, capture_id="t") -> CaptureTriplet:
    return CaptureTriplet(
        white=flat_rgb(shape, value),
        infrared=flat_rgb(shape, value),
        turquoise=flat_rgb(shape, value),
        capture_id=capture_id,
    )


# a hand-built scene: one bee ellipse with one mite disc of exactly 36 px
def scene_with_area36_mite() -> SceneSpec:
    bee = BeeShape(center=(40, 30), radii=(24, 14),
                   levels=ChannelLevels(white=170, infrared=210, turquoise=190))
    mite = MiteShape(center=(40.25, 30.5), radius=3.4,
                     levels=ChannelLevels(white=95, infrared=30, turquoise=190), host=0)
    return SceneSpec(seed=99, dims=(90, 60), bees=(bee,), mites=(mite,),
                     noise_amplitude=0)


class TestPreprocessChannel:
    def test_identical_images_give_empty_mask(self):
        img = flat_rgb((10, 10), 120)
        assert preprocess_channel(img, img, 25).count() == 0

    def test_uniform_shift_above_threshold(self):
        photo = flat_rgb((6, 8), 80)
        background = flat_rgb((6, 8), 50)
        mask = preprocess_channel(photo, background, 29)
        assert mask.count() == 6 * 8
        assert preprocess_channel(photo, background, 30).count() == 0

    def test_matches_hand_composition_on_synthetic_blob(self, rng):
        # 16x16 flat background with a painted blob; oracle composes the
        # primitives by hand with plain numpy
        background = np.full((16, 16, 3), 60, dtype=np.uint8)
        photo = background.copy()
        photo[4:9, 5:12] = (140, 150, 160)
        got = preprocess_channel(photo, background, 25)
        luma = lambda img: (
            299 * img[:, :, 0].astype(int)
            + 587 * img[:, :, 1].astype(int)
            + 114 * img[:, :, 2].astype(int)
            + 500
        ) // 1000
        expected = np.abs(luma(photo) - luma(background)) > 25
        assert np.array_equal(got.data, expected)
        blob = np.zeros((16, 16), dtype=bool)
        blob[4:9, 5:12] = True
        assert np.array_equal(got.data, blob)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            preprocess_channel(flat_rgb((4, 4), 0), flat_rgb((4, 5), 0), 10)


class TestDetectMites:
    @pytest.mark.parametrize("cfg", [
        DEFAULT_CONFIG,
        PipelineConfig(final_threshold=0, min_mite_area=0),
        PipelineConfig(open_before_threshold=True),
        PipelineConfig(threshold_ir_diff=True, ir_gain=0.0),
        PipelineConfig(diff_threshold_turquoise=0, final_threshold=0, min_mite_area=0),
    ])
    def test_background_vs_itself_yields_nothing(self, cfg):
        bg = triplet(value=90)
        result = detect_mites(bg, bg, cfg)
        assert result.regions == ()
        assert result.mite_mask.count() == 0

    def test_planted_36px_mite_detected_as_one_region(self):
        scene = render_scene(scene_with_area36_mite())
        # the rendered footprint really is 36 px (independent raster count)
        oracle_pixels = disc_pixels(40.25, 30.5, 3.4)
        assert len(oracle_pixels) == 36
        assert scene.mite_footprints[0].area == 36
        result = detect_mites(scene.capture, scene.background, DEFAULT_CONFIG)
        assert len(result.regions) == 1
        # ... and every detected pixel lies inside the planted disc
        assert result.regions[0].pixels <= frozenset(oracle_pixels)

    def test_area_filter_boundary_strictness(self):
        scene = render_scene(scene_with_area36_mite())
        detected_area = detect_mites(
            scene.capture, scene.background,
            PipelineConfig(min_mite_area=0),
        ).regions[0].area
        at_area = detect_mites(
            scene.capture, scene.background,
            PipelineConfig(min_mite_area=detected_area),
        )
        above_area = detect_mites(
            scene.capture, scene.background,
            PipelineConfig(min_mite_area=detected_area + 1),
        )
        assert len(at_area.regions) == 1
        assert len(above_area.regions) == 0
        # the paper-size filter keeps it, a too-strict one drops it
        assert len(detect_mites(scene.capture, scene.background,
                                PipelineConfig(min_mite_area=20)).regions) == 1
        assert len(detect_mites(scene.capture, scene.background,
                                PipelineConfig(min_mite_area=37)).regions) == 0

    def test_mask_equals_union_of_regions(self):
        scene = render_scene(build_scene_spec(11, Difficulty.CLEAN, dims=(400, 200)))
        result = detect_mites(scene.capture, scene.background, DEFAULT_CONFIG)
        union = set()
        for region in result.regions:
            assert region.area >= DEFAULT_CONFIG.min_mite_area
            union |= region.pixels
        mask_pixels = {
            (x, y)
            for y, x in zip(*np.nonzero(result.mite_mask.data))
        }
        assert mask_pixels == union

    def test_deterministic(self):
        scene = render_scene(build_scene_spec(23, Difficulty.NOISY, dims=(300, 150)))
        a = detect_mites(scene.capture, scene.background, DEFAULT_CONFIG)
        b = detect_mites(scene.capture, scene.background, DEFAULT_CONFIG)
        assert a.mite_mask == b.mite_mask
        assert a.regions == b.regions

    def test_raising_ir_gain_never_adds_foreground(self):
        scene = render_scene(build_scene_spec(31, Difficulty.NOISY, dims=(300, 150)))
        previous = None
        for gain in (0.0, 0.5, 1.0, 2.0, 4.0):
            cfg = PipelineConfig(ir_gain=gain, min_mite_area=0)
            mask = detect_mites(scene.capture, scene.background, cfg).mite_mask.data
            if previous is not None:
                assert not np.any(mask & ~previous)
            previous = mask

    def test_open_before_threshold_equivalent_for_flat_elements(self):
        scene = render_scene(build_scene_spec(47, Difficulty.NOISY, dims=(300, 150)))
        default = detect_mites(scene.capture, scene.background,
                               PipelineConfig(open_before_threshold=False))
        swapped = detect_mites(scene.capture, scene.background,
                               PipelineConfig(open_before_threshold=True))
        assert default.mite_mask == swapped.mite_mask

    def test_threshold_ir_diff_alternative_reading(self):
        scene = render_scene(scene_with_area36_mite())
        cfg = PipelineConfig(threshold_ir_diff=True)
        result = detect_mites(scene.capture, scene.background, cfg)
        # bee is IR-bright (masked out), mite is IR-dark: still exactly one region
        assert len(result.regions) == 1

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            detect_mites(triplet((10, 10)), triplet((10, 11)), DEFAULT_CONFIG)

    def test_missing_channel_is_input_error(self):
        with pytest.raises(DatasetError):
            CaptureTriplet(white=None, infrared=flat_rgb((4, 4), 0),
                           turquoise=flat_rgb((4, 4), 0), capture_id="x")

    def test_inconsistent_channel_sizes_rejected(self):
        with pytest.raises(DimensionError):
            CaptureTriplet(white=flat_rgb((4, 4), 0), infrared=flat_rgb((4, 5), 0),
                           turquoise=flat_rgb((4, 4), 0), capture_id="x")


class TestRunBatch:
    def test_empty(self):
        assert run_batch([], triplet(), DEFAULT_CONFIG) == []

    def test_identical_captures_identical_results(self):
        scene = render_scene(build_scene_spec(5, Difficulty.CLEAN, dims=(300, 150)))
        results = run_batch([scene.capture, scene.capture], scene.background)
        assert results[0].mite_mask == results[1].mite_mask
        assert results[0].regions == results[1].regions

    def test_matches_sequential_calls(self):
        scenes = [render_scene(build_scene_spec(100 + i, Difficulty.CLEAN, dims=(300, 150)))
                  for i in range(5)]
        background = scenes[0].background
        batch = run_batch([s.capture for s in scenes], background)
        for scene, got in zip(scenes, batch):
            solo = detect_mites(scene.capture, background)
            assert got.capture_id == scene.capture_id
            assert got.mite_mask == solo.mite_mask

    def test_error_carries_capture_id(self):
        good = triplet((10, 10), capture_id="ok")
        bad = triplet((10, 11), capture_id="broken")
        with pytest.raises(DetectionError, match="broken"):
            run_batch([good, bad], triplet((10, 10)))


class TestPipelineConfig:
    def test_defaults(self):
        cfg = DEFAULT_CONFIG
        assert cfg.diff_threshold_ir == 25
        assert cfg.diff_threshold_turquoise == 25
        assert cfg.ir_gain == 2.0
        assert cfg.final_threshold == 10
        assert cfg.min_mite_area == 20
        assert cfg.opening_element == StructuringElement(1, SeShape.SQUARE)

    def test_validation(self):
        with pytest.raises(ParameterError):
            PipelineConfig(final_threshold=256)
        with pytest.raises(ParameterError):
            PipelineConfig(ir_gain=-1)
        with pytest.raises(ParameterError):
            PipelineConfig(min_mite_area=-2)

    def test_parse_config_text(self):
        cfg = parse_config_text(
            """
            # detector settings
            diff_threshold_turquoise = 30
            ir_gain = 1.5        # gain applied to the infrared difference
            opening_element = cross:2
            open_before_threshold = true
            """
        )
        assert cfg.diff_threshold_turquoise == 30
        assert cfg.ir_gain == 1.5
        assert cfg.opening_element == StructuringElement(2, SeShape.CROSS)
        assert cfg.open_before_threshold is True
        assert cfg.final_threshold == 10  # untouched default

    def test_parse_rejects_unknown_key(self):
        with pytest.raises(ParameterError):
            parse_config_text("not_a_key = 3")

    def test_parse_rejects_bad_value(self):
        with pytest.raises(ParameterError):
            parse_config_text("ir_gain = fast")
        with pytest.raises(ParameterError):
            parse_config_text("opening_element = blob:1")

    def test_overrides(self):
        cfg = apply_config_overrides(DEFAULT_CONFIG, ["min_mite_area=5", "ir_gain=3"])
        assert cfg.min_mite_area == 5 and cfg.ir_gain == 3.0
        with pytest.raises(ParameterError):
            apply_config_overrides(DEFAULT_CONFIG, ["nope=1"])
        with pytest.raises(ParameterError):
            apply_config_overrides(DEFAULT_CONFIG, ["min_mite_area"])

    def test_config_text_round_trip(self, tmp_path):
        cfg = PipelineConfig(diff_threshold_ir=40, ir_gain=2.5,
                             opening_element=StructuringElement(2, SeShape.CROSS),
                             threshold_ir_diff=True)
        path = tmp_path / "cfg.txt"
        path.write_text(config_to_text(cfg))
        assert load_config_file(path) == cfg
