"""Land-only point generation: rejection sampling against a binary water mask.

Points are drawn uniformly in lat/lon within the configured window and kept
only when the nearest water-mask cell is land. Each accepted point seeds one
square scene footprint.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptFile, MaxRejectionsExceeded, PolarFootprint

METERS_PER_DEGREE = 111_320.0

MASK_MAGIC = b"WMSK"


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError("lat/lon must be finite")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"lat {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"lon {self.lon} outside [-180, 180]")


@dataclass
class WaterMask:
    """Equirectangular binary grid; 1 = water, 0 = land.

    Row 0's top edge sits at lat +90, column 0's left edge at lon -180.
    """

    cell_deg: float
    bits: np.ndarray  # bool, shape (rows, cols), True = water

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.ndim != 2:
            raise ValueError("mask bits must be 2-D")
        rows, cols = self.bits.shape
        if self.cell_deg <= 0:
            raise ValueError("cell_deg must be positive")
        if not math.isclose(rows * self.cell_deg, 180.0):
            raise ValueError("rows * cell_deg must equal 180")
        if not math.isclose(cols * self.cell_deg, 360.0):
            raise ValueError("cols * cell_deg must equal 360")

    @property
    def rows(self) -> int:
        return self.bits.shape[0]

    @property
    def cols(self) -> int:
        return self.bits.shape[1]

    @classmethod
    def all_land(cls, cell_deg: float = 1.0) -> "WaterMask":
        rows, cols = round(180 / cell_deg), round(360 / cell_deg)
        return cls(cell_deg, np.zeros((rows, cols), dtype=bool))

    @classmethod
    def all_water(cls, cell_deg: float = 1.0) -> "WaterMask":
        rows, cols = round(180 / cell_deg), round(360 / cell_deg)
        return cls(cell_deg, np.ones((rows, cols), dtype=bool))

    def save(self, path) -> None:
        """Binary mask file: 16-byte header then row-major bit-packed rows.

        Header: magic "WMSK", u32 rows, u32 cols, u32 reserved (little-endian).
        Each row is packed MSB-first and padded to a byte boundary.
        """
        with open(path, "wb") as f:
            f.write(MASK_MAGIC)
            f.write(struct.pack("<III", self.rows, self.cols, 0))
            for row in self.bits:
                f.write(np.packbits(row).tobytes())

    @classmethod
    def load(cls, path) -> "WaterMask":
        data = Path(path).read_bytes()
        if len(data) < 16 or data[:4] != MASK_MAGIC:
            raise CorruptFile(f"not a mask file: {path}")
        rows, cols, _ = struct.unpack("<III", data[4:16])
        row_bytes = (cols + 7) // 8
        payload = data[16:]
        if len(payload) < rows * row_bytes:
            raise CorruptFile(f"mask payload truncated: {path}")
        bits = np.empty((rows, cols), dtype=bool)
        for r in range(rows):
            packed = np.frombuffer(payload, dtype=np.uint8,
                                   count=row_bytes, offset=r * row_bytes)
            bits[r] = np.unpackbits(packed)[:cols].astype(bool)
        if rows == 0 or cols == 0:
            raise CorruptFile(f"empty mask: {path}")
        return cls(cell_deg=180.0 / rows, bits=bits)


@dataclass
class SamplerConfig:
    n_points: int
    seed: int = 0
    lat_range: tuple[float, float] = (-56.0, 84.0)
    lon_range: tuple[float, float] = (-180.0, 180.0)
    max_rejections: int = 10_000
    scene_size_px: int = 1000
    gsd_m: float = 10.0

    def validate(self) -> None:
        lat_min, lat_max = self.lat_range
        lon_min, lon_max = self.lon_range
        if not (-90.0 <= lat_min <= lat_max <= 90.0):
            raise ValueError(f"bad lat_range {self.lat_range}")
        if not (-180.0 <= lon_min <= lon_max <= 180.0):
            raise ValueError(f"bad lon_range {self.lon_range}")
        if self.n_points < 0:
            raise ValueError("n_points must be >= 0")
        if self.max_rejections < 1:
            raise ValueError("max_rejections must be >= 1")


@dataclass(frozen=True)
class SceneFootprint:
    center: GeoPoint
    size_px: int
    gsd_m: float
    bbox: tuple[float, float, float, float]  # lat_min, lon_min, lat_max, lon_max


def mask_index(mask: WaterMask, p: GeoPoint) -> tuple[int, int]:
    """Nearest-cell index: floor lookup clamped to the grid."""
    row = int(math.floor((90.0 - p.lat) / mask.cell_deg))
    col = int(math.floor((p.lon + 180.0) / mask.cell_deg))
    row = min(max(row, 0), mask.rows - 1)
    col = min(max(col, 0), mask.cols - 1)
    return row, col


def is_land(mask: WaterMask, p: GeoPoint) -> bool:
    row, col = mask_index(mask, p)
    return not bool(mask.bits[row, col])


def generate_points(cfg: SamplerConfig, mask: WaterMask) -> list[GeoPoint]:
    """Uniform rejection sampling on the land subset of the lat/lon window.

    Deterministic for a fixed seed. Raises MaxRejectionsExceeded when one
    point burns through cfg.max_rejections consecutive water draws.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    lat_min, lat_max = cfg.lat_range
    lon_min, lon_max = cfg.lon_range
    points: list[GeoPoint] = []
    for _ in range(cfg.n_points):
        for attempt in range(cfg.max_rejections):
            lat = float(rng.uniform(lat_min, lat_max))
            lon = float(rng.uniform(lon_min, lon_max))
            p = GeoPoint(lat, lon)
            if is_land(mask, p):
                points.append(p)
                break
        else:
            raise MaxRejectionsExceeded(
                f"no land point found in {cfg.max_rejections} draws "
                f"(window lat {cfg.lat_range}, lon {cfg.lon_range})"
            )
    return points


def footprint_of(p: GeoPoint, size_px: int, gsd_m: float) -> SceneFootprint:
    """Square footprint of size_px * gsd_m meters centered on p.

    Spherical approximation: dlat = h/111320, dlon = h/(111320*cos(lat)).
    """
    if size_px < 0:
        raise ValueError("size_px must be >= 0")
    if gsd_m <= 0:
        raise ValueError("gsd_m must be positive")
    if abs(p.lat) >= 89.0:
        raise PolarFootprint(f"lat {p.lat} too close to a pole")
    half_m = size_px * gsd_m / 2.0
    dlat = half_m / METERS_PER_DEGREE
    dlon = half_m / (METERS_PER_DEGREE * math.cos(math.radians(p.lat)))
    bbox = (p.lat - dlat, p.lon - dlon, p.lat + dlat, p.lon + dlon)
    return SceneFootprint(center=p, size_px=size_px, gsd_m=gsd_m, bbox=bbox)


def save_points(points: list[GeoPoint], path) -> None:
    """CSV with header id,lat,lon; 6 decimal places; LF endings."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("id,lat,lon\n")
        for i, p in enumerate(points):
            f.write(f"{i},{p.lat:.6f},{p.lon:.6f}\n")


def load_points(path) -> list[GeoPoint]:
    points = []
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["id", "lat", "lon"]:
            raise CorruptFile(f"bad points CSV header in {path}: {header}")
        for row in reader:
            if not row:
                continue
            if len(row) != 3:
                raise CorruptFile(f"malformed points row in {path}: {row}")
            try:
                points.append(GeoPoint(float(row[1]), float(row[2])))
            except ValueError as e:
                raise CorruptFile(f"malformed points row in {path}: {row}") from e
    return points
