from __future__ import annotations

import numpy as np
import pytest

from varroa_scan.raster import BinaryMask, GrayImage


def mask_from_rows(rows: list[str]) -> BinaryMask:
    """Build a mask from ASCII art: '#' = foreground, anything else = background."""
    data = np.array([[c == "#" for c in row] for row in rows], dtype=bool)
    return BinaryMask(data)


def gray_from_rows(rows: list[list[int]]) -> GrayImage:
    return GrayImage(np.array(rows, dtype=np.uint8))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)
