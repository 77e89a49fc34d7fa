"""Command-line interface: detect, eval, synth, report.

Exit codes are a stable scripting contract: 0 = success, 1 = data error
(unreadable inputs, refused overwrite, bad report files), 2 = usage error
(bad flags, unknown --set keys, missing background capture). The log
level is taken from the VARROA_SCAN_LOG environment variable.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .annotations import (
    DatasetEntry,
    DatasetIndex,
    load_dataset,
    mite_mask_of,
    read_class_mask_png,
    read_rgb_png,
)
from .errors import AnnotationParseError, ParameterError, VarroaScanError
from .metrics import (
    SbmCounts,
    aggregate,
    evaluate_image,
    format_recall,
    format_report,
    parse_report_kv,
    recall_percent,
    render_confusion_matrix,
    report_to_kv,
)
from .pipeline import (
    DEFAULT_CONFIG,
    CaptureTriplet,
    DetectionResult,
    PipelineConfig,
    apply_config_overrides,
    config_to_text,
    detect_mites,
    load_config_file,
)
from .raster import read_mask_png, write_mask_png
from .synth import BACKGROUND_CAPTURE_ID, Difficulty, export_suite, generate_suite

log = logging.getLogger("varroa_scan")

MASK_SUFFIX = "_mite_mask.png"
REGIONS_SUFFIX = "_regions.txt"

EXIT_OK = 0
EXIT_DATA = 1
EXIT_USAGE = 2


def _configure_logging() -> None:
    level_name = os.environ.get("VARROA_SCAN_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="varroa-scan",
        description="Multispectral mite screening: detection, evaluation, synthesis.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_detect = sub.add_parser("detect", help="run the detector over a dataset")
    p_detect.add_argument("--dataset", required=True, help="dataset root directory")
    p_detect.add_argument("--background", required=True, metavar="CAPTURE_ID",
                          help="capture id of the static empty-scene background")
    p_detect.add_argument("--out", required=True, help="output directory for masks/regions")
    p_detect.add_argument("--config", help="pipeline config file (key = value lines)")
    p_detect.add_argument("--set", dest="overrides", action="append", default=[],
                          metavar="KEY=VALUE", help="override a config key (repeatable)")
    p_detect.add_argument("--jobs", type=int, default=1, help="parallel workers (default 1)")
    p_detect.add_argument("--force", action="store_true",
                          help="write into a non-empty output directory")

    p_eval = sub.add_parser("eval", help="score predicted masks against ground truth")
    p_eval.add_argument("--pred", required=True, help="directory of *_mite_mask.png files")
    p_eval.add_argument("--dataset", required=True, help="ground-truth dataset root")
    p_eval.add_argument("--min-area", type=int, default=DEFAULT_CONFIG.min_mite_area,
                        help="discard predicted regions smaller than this (pixels)")
    p_eval.add_argument("--report", required=True, help="report file to write")
    p_eval.add_argument("--force", action="store_true", help="overwrite an existing report")

    p_synth = sub.add_parser("synth", help="materialize synthetic scenes as a dataset")
    p_synth.add_argument("--out", required=True, help="output dataset root")
    p_synth.add_argument("--count", type=int, required=True, help="number of scenes")
    p_synth.add_argument("--seed", type=int, default=1, help="base seed (default 1)")
    p_synth.add_argument("--difficulty", choices=[d.value for d in Difficulty],
                         default=Difficulty.CLEAN.value)
    p_synth.add_argument("--force", action="store_true",
                         help="write into a non-empty output directory")

    p_report = sub.add_parser("report", help="merge evaluation reports and print totals")
    p_report.add_argument("reports", nargs="+", metavar="REPORT", help="report files")

    return parser


# ---------------------------------------------------------------------------
# detect
# ---------------------------------------------------------------------------

def _entry_triplet(entry: DatasetEntry) -> CaptureTriplet:
    missing = [name for name, p in entry.photo_paths().items() if p is None]
    if missing:
        raise VarroaScanError(f"missing illumination photo(s): {', '.join(missing)}")
    return CaptureTriplet(
        white=read_rgb_png(entry.white),
        infrared=read_rgb_png(entry.infrared),
        turquoise=read_rgb_png(entry.turquoise),
        capture_id=entry.capture_id,
    )


def _ensure_output_dir(path: Path, force: bool) -> None:
    if path.exists():
        if not path.is_dir():
            raise VarroaScanError(f"{path} exists and is not a directory")
        if any(path.iterdir()) and not force:
            raise VarroaScanError(f"output directory {path} is not empty (use --force)")
    path.mkdir(parents=True, exist_ok=True)


def _write_detection(result: DetectionResult, out_dir: Path) -> None:
    write_mask_png(result.mite_mask, out_dir / f"{result.capture_id}{MASK_SUFFIX}")
    lines = ["# id area x_min y_min x_max y_max (bbox inclusive)"]
    for region in result.regions:
        x0, y0, x1, y1 = region.bbox
        lines.append(f"{region.id} {region.area} {x0} {y0} {x1} {y1}")
    (out_dir / f"{result.capture_id}{REGIONS_SUFFIX}").write_text("\n".join(lines) + "\n")


def _cmd_detect(args) -> int:
    try:
        config = load_config_file(args.config) if args.config else DEFAULT_CONFIG
    except (OSError, ParameterError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_DATA
    try:
        config = apply_config_overrides(config, args.overrides)
    except ParameterError as exc:
        print(f"error: --set: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        index = load_dataset(args.dataset)
    except VarroaScanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA

    bg_entry = index.get(args.background)
    if bg_entry is None:
        print(f"error: background capture {args.background!r} not found in dataset",
              file=sys.stderr)
        return EXIT_USAGE
    try:
        background = _entry_triplet(bg_entry)
    except VarroaScanError as exc:
        print(f"error: background capture: {exc}", file=sys.stderr)
        return EXIT_DATA

    out_dir = Path(args.out)
    try:
        _ensure_output_dir(out_dir, args.force)
    except VarroaScanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA

    targets = [e for e in index.entries if e.capture_id != args.background]
    failures: list[tuple[str, str]] = []

    def process(entry: DatasetEntry):
        started = time.perf_counter()
        result = detect_mites(_entry_triplet(entry), background, config)
        return result, time.perf_counter() - started

    jobs = max(args.jobs, 1)
    outcomes: list[tuple[DatasetEntry, object]] = []
    if jobs == 1:
        for entry in targets:
            try:
                outcomes.append((entry, process(entry)))
            except VarroaScanError as exc:
                outcomes.append((entry, exc))
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [(entry, pool.submit(process, entry)) for entry in targets]
            for entry, future in futures:
                try:
                    outcomes.append((entry, future.result()))
                except VarroaScanError as exc:
                    outcomes.append((entry, exc))

    detected = 0
    for entry, outcome in outcomes:
        if isinstance(outcome, Exception):
            failures.append((entry.capture_id, str(outcome)))
            print(f"error: {entry.capture_id}: {outcome}", file=sys.stderr)
            continue
        result, elapsed = outcome
        _write_detection(result, out_dir)
        detected += 1
        print(f"{entry.capture_id}: {len(result.regions)} region(s), {elapsed * 1000:.1f} ms")

    (out_dir / "config_used.txt").write_text(config_to_text(config))
    print(f"{detected} capture(s) processed, {len(failures)} failed")
    return EXIT_DATA if failures else EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _cmd_eval(args) -> int:
    if args.min_area < 0:
        print("error: --min-area must be non-negative", file=sys.stderr)
        return EXIT_USAGE
    pred_dir = Path(args.pred)
    if not pred_dir.is_dir():
        print(f"error: prediction directory {pred_dir} not found", file=sys.stderr)
        return EXIT_DATA
    report_path = Path(args.report)
    if report_path.exists() and not args.force:
        print(f"error: report {report_path} exists (use --force)", file=sys.stderr)
        return EXIT_DATA

    try:
        index = load_dataset(args.dataset)
    except VarroaScanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA

    predictions = sorted(pred_dir.glob(f"*{MASK_SUFFIX}"))
    if not predictions:
        print(f"error: no *{MASK_SUFFIX} files in {pred_dir}", file=sys.stderr)
        return EXIT_DATA

    per_image: list[tuple[str, SbmCounts]] = []
    unpaired: list[str] = []
    for pred_path in predictions:
        capture_id = pred_path.name[: -len(MASK_SUFFIX)]
        entry = index.get(capture_id)
        if entry is None or entry.mask is None:
            unpaired.append(capture_id)
            continue
        try:
            pred_mask = read_mask_png(pred_path)
            gt_mask = mite_mask_of(read_class_mask_png(entry.mask))
            per_image.append((capture_id, evaluate_image(pred_mask, gt_mask, args.min_area)))
        except VarroaScanError as exc:
            print(f"error: {capture_id}: {exc}", file=sys.stderr)
            unpaired.append(capture_id)

    for capture_id in unpaired:
        print(f"warning: prediction {capture_id!r} has no usable ground truth, excluded",
              file=sys.stderr)
    if not per_image:
        print("error: no prediction could be paired with ground truth", file=sys.stderr)
        return EXIT_DATA

    report = aggregate(per_image, min_area=args.min_area)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(report_to_kv(report))
    print(format_report(report))
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def _cmd_synth(args) -> int:
    if args.count < 0:
        print("error: --count must be non-negative", file=sys.stderr)
        return EXIT_USAGE
    out_root = Path(args.out)
    try:
        _ensure_output_dir(out_root, args.force)
    except VarroaScanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    scenes = generate_suite(args.count, args.seed, Difficulty(args.difficulty))
    export_suite(scenes, out_root)
    print(f"{len(scenes)} scene(s) written to {out_root} "
          f"(difficulty={args.difficulty}, base seed={args.seed})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def _cmd_report(args) -> int:
    merged: list[tuple[str, SbmCounts]] = []
    min_areas: list[int | None] = []
    for path in args.reports:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DATA
        try:
            report = parse_report_kv(text)
        except AnnotationParseError as exc:
            print(f"error: {path}: {exc}", file=sys.stderr)
            return EXIT_DATA
        merged.extend(report.per_image)
        min_areas.append(report.min_area)
    if len(set(min_areas)) > 1:
        print(f"error: reports disagree on min_area ({sorted(set(str(m) for m in min_areas))}); "
              "refusing to merge", file=sys.stderr)
        return EXIT_DATA

    combined = aggregate(merged, min_area=min_areas[0])
    print(render_confusion_matrix(combined.total))
    print(f"images = {len(combined.per_image)}")
    print(f"recall = {format_recall(combined.recall)}"
          + (f" ({recall_percent(combined.recall)})" if combined.recall is not None else ""))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    handlers = {
        "detect": _cmd_detect,
        "eval": _cmd_eval,
        "synth": _cmd_synth,
        "report": _cmd_report,
    }
    try:
        return handlers[args.command](args)
    except VarroaScanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def entry_point() -> None:  # console-script shim
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
