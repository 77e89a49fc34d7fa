"""Satisfied-bee metric (SBM): object-level scoring of mite detections.

A predicted mite region counts as correct if it shares at least one pixel
with any ground-truth mite region; localization precision is not scored.
The matching is two-pass:

* pass 1 — every predicted region either intersects some ground-truth
  region (tp += 1) or intersects none (fp += 1);
* pass 2 — every ground-truth region that intersects no predicted region
  is a miss (fn += 1); intersected ones were already counted in pass 1.

There is no true-negative notion: tn is structurally 0. A minimum-area
filter applies to predictions only, never to ground truth.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import AnnotationParseError, DimensionError, ParameterError
from .raster import BinaryMask, Region, connected_components

__all__ = [
    "SbmCounts",
    "EvalReport",
    "filter_regions",
    "sbm_match",
    "evaluate_image",
    "aggregate",
    "format_recall",
    "recall_percent",
    "render_confusion_matrix",
    "format_report",
    "report_to_kv",
    "parse_report_kv",
]

REPORT_FORMAT = "varroa-scan-report-v1"


@dataclass(frozen=True)
class SbmCounts:
    """TP/FP/FN/TN tallies; tn is always 0 by construction."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative")
        if self.tn != 0:
            raise ParameterError("tn is structurally 0 in the satisfied-bee metric")

    def __add__(self, other: "SbmCounts") -> "SbmCounts":
        return SbmCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def recall(self) -> float | None:
        """tp / (tp + fn), or None when there is nothing to recall."""
        denom = self.tp + self.fn
        return self.tp / denom if denom > 0 else None


@dataclass(frozen=True)
class EvalReport:
    """Per-image counts plus dataset totals and recall."""

    per_image: tuple[tuple[str, SbmCounts], ...]
    total: SbmCounts
    recall: float | None
    min_area: int | None

    def __post_init__(self):
        summed = sum((c for _, c in self.per_image), SbmCounts())
        if summed != self.total:
            raise ParameterError("report total does not equal the sum of per-image counts")


def filter_regions(regions: Sequence[Region], min_area: int) -> list[Region]:
    """Keep regions with area >= min_area, preserving order."""
    if min_area < 0:
        raise ParameterError(f"min_area must be non-negative, got {min_area}")
    return [r for r in regions if r.area >= min_area]


def sbm_match(predicted: Sequence[Region], ground_truth: Sequence[Region]) -> SbmCounts:
    """Two-pass intersection matching of predicted vs ground-truth regions."""
    tp = fp = fn = 0
    for pred in predicted:
        if any(pred.intersects(gt) for gt in ground_truth):
            tp += 1
        else:
            fp += 1
    for gt in ground_truth:
        if not any(gt.intersects(pred) for pred in predicted):
            fn += 1
    return SbmCounts(tp, fp, fn)


def evaluate_image(pred_mask: BinaryMask, gt_mask: BinaryMask, min_area: int = 0) -> SbmCounts:
    """Score one predicted mite mask against its ground truth.

    Predictions below min_area are discarded before matching; ground-truth
    regions are never filtered.
    """
    if pred_mask.width != gt_mask.width or pred_mask.height != gt_mask.height:
        raise DimensionError(
            f"mask dimensions differ: {pred_mask.width}x{pred_mask.height}"
            f" vs {gt_mask.width}x{gt_mask.height}"
        )
    predicted = filter_regions(connected_components(pred_mask), min_area)
    truth = connected_components(gt_mask)
    return sbm_match(predicted, truth)


def aggregate(
    per_image: Iterable[tuple[str, SbmCounts]], min_area: int | None = None
) -> EvalReport:
    """Sum per-image counts fieldwise and compute recall from the totals."""
    entries = tuple(per_image)
    total = sum((c for _, c in entries), SbmCounts())
    return EvalReport(per_image=entries, total=total, recall=total.recall(), min_area=min_area)


def format_recall(recall: float | None) -> str:
    return "undefined" if recall is None else f"{recall:.4f}"


def recall_percent(recall: float | None) -> str:
    """Whole-percent rendering (round half up), e.g. '55%'."""
    if recall is None:
        return "undefined"
    return f"{math.floor(recall * 100 + 0.5):.0f}%"


def render_confusion_matrix(counts: SbmCounts) -> str:
    """2x2 confusion matrix: predicted along the top, ground truth at left."""
    cells = [
        [f"TP={counts.tp}", f"FN={counts.fn}"],
        [f"FP={counts.fp}", f"TN={counts.tn}"],
    ]
    width = max(len(c) for row in cells for c in row)
    lines = ["          Predicted"]
    lines.append(f"GT    {cells[0][0]:<{width}}  {cells[0][1]:<{width}}")
    lines.append(f"      {cells[1][0]:<{width}}  {cells[1][1]:<{width}}")
    return "\n".join(lines)


def format_report(report: EvalReport) -> str:
    """Human-readable report: per-image table, matrix, recall."""
    lines = []
    if report.per_image:
        id_width = max(len(cid) for cid, _ in report.per_image)
        id_width = max(id_width, len("capture"))
        lines.append(f"{'capture':<{id_width}}  {'tp':>5}  {'fp':>5}  {'fn':>5}  {'tn':>5}")
        for cid, c in report.per_image:
            lines.append(f"{cid:<{id_width}}  {c.tp:>5}  {c.fp:>5}  {c.fn:>5}  {c.tn:>5}")
        lines.append("")
    lines.append(render_confusion_matrix(report.total))
    lines.append("")
    if report.min_area is not None:
        lines.append(f"min_area = {report.min_area}")
    lines.append(f"recall = {format_recall(report.recall)}"
                 + (f" ({recall_percent(report.recall)})" if report.recall is not None else ""))
    return "\n".join(lines)


def report_to_kv(report: EvalReport) -> str:
    """Machine-readable key-value serialization (one record per line)."""
    lines = [f"format = {REPORT_FORMAT}"]
    lines.append(f"min_area = {'-' if report.min_area is None else report.min_area}")
    for cid, c in report.per_image:
        lines.append(f"image {cid} tp={c.tp} fp={c.fp} fn={c.fn} tn={c.tn}")
    t = report.total
    lines.append(f"total tp={t.tp} fp={t.fp} fn={t.fn} tn={t.tn}")
    lines.append(f"recall = {format_recall(report.recall)}")
    return "\n".join(lines) + "\n"


def _parse_count_fields(tail: list[str], line_no: int) -> SbmCounts:
    values = {}
    for tok in tail:
        key, _, val = tok.partition("=")
        if key not in ("tp", "fp", "fn", "tn") or not val:
            raise AnnotationParseError(f"bad count field {tok!r}", line_no)
        try:
            values[key] = int(val)
        except ValueError:
            raise AnnotationParseError(f"non-integer count {tok!r}", line_no) from None
    missing = {"tp", "fp", "fn", "tn"} - values.keys()
    if missing:
        raise AnnotationParseError(f"missing count fields {sorted(missing)}", line_no)
    try:
        return SbmCounts(**values)
    except ParameterError as exc:
        raise AnnotationParseError(str(exc), line_no) from None


def parse_report_kv(text: str) -> EvalReport:
    """Parse the key-value report format written by report_to_kv."""
    per_image: list[tuple[str, SbmCounts]] = []
    min_area: int | None = None
    total: SbmCounts | None = None
    saw_format = False
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("format"):
            _, _, val = line.partition("=")
            if val.strip() != REPORT_FORMAT:
                raise AnnotationParseError(f"unsupported report format {val.strip()!r}", line_no)
            saw_format = True
        elif line.startswith("min_area"):
            _, _, val = line.partition("=")
            val = val.strip()
            if val != "-":
                try:
                    min_area = int(val)
                except ValueError:
                    raise AnnotationParseError(f"bad min_area {val!r}", line_no) from None
        elif line.startswith("image "):
            fields = line.split()
            if len(fields) != 6:
                raise AnnotationParseError("image record needs: image <id> tp= fp= fn= tn=", line_no)
            per_image.append((fields[1], _parse_count_fields(fields[2:], line_no)))
        elif line.startswith("total "):
            total = _parse_count_fields(line.split()[1:], line_no)
        elif line.startswith("recall"):
            continue  # derived; recomputed below
        else:
            raise AnnotationParseError(f"unrecognized record {line.split()[0]!r}", line_no)
    if not saw_format:
        raise AnnotationParseError(f"missing 'format = {REPORT_FORMAT}' header")
    report = aggregate(per_image, min_area=min_area)
    if total is not None and total != report.total:
        raise AnnotationParseError("total line does not match the sum of image records")
    return report
