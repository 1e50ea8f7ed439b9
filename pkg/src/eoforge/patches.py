"""Patch tiling, positional filenames and preview mosaics.

A kept scene image is cut into a discard-partial grid of fixed-size patches;
the filename encodes (scene, month, row, col) so any patch can be located
again. Previews stack acquisition dates as rows and patches as columns.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import InconsistentSeries, PatchTooLarge


@dataclass(frozen=True)
class PatchGrid:
    patch_px: int = 250
    stride_px: int = 0  # 0 means stride == patch

    def __post_init__(self):
        if self.patch_px < 1:
            raise ValueError("patch_px must be >= 1")
        if self.stride_px == 0:
            object.__setattr__(self, "stride_px", self.patch_px)
        if self.stride_px < 1:
            raise ValueError("stride_px must be >= 1")

    def shape(self, height: int, width: int) -> tuple[int, int]:
        """(rows, cols) of fully-contained patches; partial edges dropped."""
        if self.patch_px > min(height, width):
            raise PatchTooLarge(
                f"patch {self.patch_px} exceeds image {width}x{height}")
        rows = (height - self.patch_px) // self.stride_px + 1
        cols = (width - self.patch_px) // self.stride_px + 1
        return rows, cols


def extract_patches(image: np.ndarray,
                    grid: PatchGrid) -> list[tuple[int, int, np.ndarray]]:
    """Row-major list of (row, col, patch); every patch a contiguous crop."""
    image = np.asarray(image)
    rows, cols = grid.shape(image.shape[0], image.shape[1])
    out = []
    for r in range(rows):
        for c in range(cols):
            y, x = r * grid.stride_px, c * grid.stride_px
            out.append((r, c, image[y:y + grid.patch_px, x:x + grid.patch_px].copy()))
    return out


_PATCH_NAME_RE = re.compile(
    r"scene_(\d{4})_(\d{4}-\d{2})_r(\d{2})_c(\d{2})\.png$")


def patch_filename(scene_id: int, month: str, row: int, col: int) -> str:
    return f"scene_{scene_id:04d}_{month}_r{row:02d}_c{col:02d}.png"


def parse_patch_filename(name: str) -> tuple[int, str, int, int]:
    m = _PATCH_NAME_RE.search(name)
    if not m:
        raise ValueError(f"not a patch filename: {name}")
    return int(m.group(1)), m.group(2), int(m.group(3)), int(m.group(4))


def build_preview(series: list[np.ndarray], grid: PatchGrid,
                  dates: list[str] | None = None) -> np.ndarray:
    """Mosaic: one row per acquisition (chronological), one column per patch.

    All images must share dimensions. Output is
    (n_dates * patch) x (rows * cols * patch) pixels.
    """
    if not series:
        raise InconsistentSeries("empty series")
    shapes = {np.asarray(im).shape for im in series}
    if len(shapes) != 1:
        raise InconsistentSeries(f"series images disagree in shape: {shapes}")
    if dates is not None:
        if len(dates) != len(series):
            raise InconsistentSeries("dates and series lengths differ")
        order = np.argsort(dates, kind="stable")
        series = [series[i] for i in order]

    first = np.asarray(series[0])
    rows, cols = grid.shape(first.shape[0], first.shape[1])
    n_patches = rows * cols
    p = grid.patch_px
    channels = first.shape[2:] if first.ndim == 3 else ()
    mosaic = np.zeros((len(series) * p, n_patches * p) + channels,
                      dtype=first.dtype)
    for d, image in enumerate(series):
        for idx, (_, _, patch) in enumerate(extract_patches(image, grid)):
            mosaic[d * p:(d + 1) * p, idx * p:(idx + 1) * p] = patch
    return mosaic
