"""Raster normalization (min-max, standardization, max) and PNG/TIFF export.

All three modes rescale with scalars computed over the valid (non-nodata)
pixels of the statistics scope. Standardized output is unbounded, so the
uint8 export clips z-scores to [-3, 3] and maps them affinely onto [0, 1].
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import AllNodata, MissingBand
from .raster import Raster, quantize_u8, write_geotiff, write_png_gray, write_png_rgb
from .store import Satellite

log = logging.getLogger(__name__)

STD_CLIP = 3.0  # z-score clip for uint8 export

S2_RGB_BANDS = ("B4", "B3", "B2")  # R, G, B
S1_BAND = "VV"


class NormalizationMode(str, Enum):
    MIN_MAX = "minmax"
    STANDARDIZE = "std"
    MAX_DIV = "max"
    RAW_TIFF = "tiff"


class StatsScope(str, Enum):
    IMAGE = "image"   # one scalar set over all bands jointly
    BAND = "band"     # scalars per band


@dataclass(frozen=True)
class ImageStats:
    min: float
    max: float
    mean: float
    std: float


def stats_of(r: Raster, band_scope: list[str] | None = None) -> ImageStats:
    """Scalars over all non-nodata values of the selected bands jointly.

    std is the population standard deviation (divide by N).
    """
    names = band_scope if band_scope is not None else r.band_names
    values = []
    for name in names:
        if name not in r.bands:
            raise MissingBand(f"raster has no band {name!r}")
        plane = r.bands[name]
        valid = plane[~r.nodata_mask(plane)]
        if valid.size:
            values.append(valid.astype(np.float64))
    if not values:
        raise AllNodata(f"no valid pixels in bands {names}")
    flat = np.concatenate(values)
    return ImageStats(min=float(flat.min()), max=float(flat.max()),
                      mean=float(flat.mean()), std=float(flat.std()))


def _apply(r: Raster, fn) -> Raster:
    """Map fn over valid pixels of every band; nodata pixels stay nodata."""
    out = {}
    for name, plane in r.bands.items():
        mask = r.nodata_mask(plane)
        transformed = fn(plane.astype(np.float64)).astype(np.float32)
        transformed[mask] = r.nodata
        out[name] = transformed
    return Raster(bands=out, nodata=r.nodata, geo_transform=r.geo_transform)


def normalize_minmax(r: Raster, stats: ImageStats) -> Raster:
    if stats.max == stats.min:
        log.warning("min-max normalization of a constant image; emitting zeros")
        return _apply(r, lambda v: np.zeros_like(v))
    return _apply(r, lambda v: (v - stats.min) / (stats.max - stats.min))


def normalize_std(r: Raster, stats: ImageStats) -> Raster:
    if stats.std == 0.0:
        log.warning("standardization with zero std; emitting zeros")
        return _apply(r, lambda v: np.zeros_like(v))
    return _apply(r, lambda v: (v - stats.mean) / stats.std)


def normalize_max(r: Raster, stats: ImageStats) -> Raster:
    if stats.max == 0.0:
        log.warning("max normalization with zero max; emitting zeros")
        return _apply(r, lambda v: np.zeros_like(v))
    return _apply(r, lambda v: v / stats.max)


_NORMALIZERS = {
    NormalizationMode.MIN_MAX: normalize_minmax,
    NormalizationMode.STANDARDIZE: normalize_std,
    NormalizationMode.MAX_DIV: normalize_max,
}


def to_unit_range(plane: np.ndarray, mode: NormalizationMode) -> np.ndarray:
    """Map a normalized plane into [0, 1] for quantization."""
    if mode is NormalizationMode.STANDARDIZE:
        return (np.clip(plane, -STD_CLIP, STD_CLIP) + STD_CLIP) / (2 * STD_CLIP)
    return plane


def _export_plane(r: Raster, band: str, mode: NormalizationMode,
                  scope_bands: list[str] | None) -> np.ndarray:
    """Normalize one band and quantize it to uint8, zero-filling on failure."""
    try:
        stats = stats_of(r, scope_bands)
    except AllNodata:
        log.warning("band scope %s all nodata; zero-filling", scope_bands)
        return np.zeros((r.height, r.width), dtype=np.uint8)
    normalized = _NORMALIZERS[mode](r, stats)
    return quantize_u8(to_unit_range(normalized.bands[band], mode))


def convert_product(r: Raster, satellite: Satellite, mode: NormalizationMode,
                    out_path, stats_scope: StatsScope | None = None) -> Path:
    """Write the converted product: PNG for normalized modes, TIFF passthrough.

    S2 renders RGB from B4/B3/B2; S1 renders grayscale VV. QA60 is never
    rendered. Default scope: per-band for S2 RGB, whole image for S1.
    """
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    if mode is NormalizationMode.RAW_TIFF:
        write_geotiff(r, out_path)
        return out_path

    if satellite is Satellite.S2:
        for band in S2_RGB_BANDS:
            if band not in r.bands:
                raise MissingBand(f"S2 raster lacks {band}")
        scope = stats_scope or StatsScope.BAND
        if scope is StatsScope.BAND:
            channels = [_export_plane(r, b, mode, [b]) for b in S2_RGB_BANDS]
        else:
            rgb = list(S2_RGB_BANDS)
            channels = [_export_plane(r, b, mode, rgb) for b in S2_RGB_BANDS]
        write_png_rgb(*channels, out_path)
    else:
        if S1_BAND not in r.bands:
            raise MissingBand(f"S1 raster lacks {S1_BAND}")
        # image and band scope coincide for the single S1 band
        write_png_gray(_export_plane(r, S1_BAND, mode, [S1_BAND]), out_path)
    return out_path
