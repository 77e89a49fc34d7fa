"""Exception types shared across the package."""
from __future__ import annotations


class VarroaScanError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(VarroaScanError):
    """Image dimensions are invalid or inconsistent between operands."""


class RangeError(VarroaScanError):
    """A pixel value lies outside the representable range of the target type."""


class ParameterError(VarroaScanError):
    """A scalar parameter or configuration value is invalid."""


class AnnotationParseError(VarroaScanError):
    """A text artifact (YOLO line, manifest, report) could not be parsed."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class DatasetError(VarroaScanError):
    """A dataset entry is unusable (missing channel, unreadable file, ...)."""


class SceneSpecError(VarroaScanError):
    """A synthetic scene specification violates its invariants."""


class DetectionError(VarroaScanError):
    """Detection failed for a specific capture; carries the capture id."""

    def __init__(self, capture_id: str, message: str):
        super().__init__(f"capture {capture_id!r}: {message}")
        self.capture_id = capture_id
