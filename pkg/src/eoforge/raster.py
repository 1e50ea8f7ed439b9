"""Raster substrate: multi-band float32 grids, GeoTIFF and PNG I/O.

GeoTIFF files are written as one float32 page per band (striped, no
compression) with band names in ImageDescription, the GDAL ASCII nodata tag,
and ModelPixelScale/ModelTiepoint carrying the geo-transform. Internal
samples are always float32 regardless of the source depth.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, TiffImagePlugin, UnidentifiedImageError

from .errors import CorruptFile, UnsupportedLayout

TAG_IMAGE_DESCRIPTION = 270
TAG_MODEL_PIXEL_SCALE = 33550
TAG_MODEL_TIEPOINT = 33922
TAG_GDAL_NODATA = 42113

# keep Pillow from refusing large scene mosaics
Image.MAX_IMAGE_PIXELS = None


@dataclass(frozen=True)
class GeoTransform:
    """Top-left corner and per-pixel step in degrees (north-up grid)."""

    origin_lat: float = 0.0
    origin_lon: float = 0.0
    pixel_deg_lat: float = 0.0
    pixel_deg_lon: float = 0.0


@dataclass
class Raster:
    """Immutable-by-convention multi-band pixel grid."""

    bands: dict[str, np.ndarray]  # name -> float32 plane, all width x height
    nodata: float = math.nan
    geo_transform: GeoTransform = field(default_factory=GeoTransform)

    def __post_init__(self):
        if not self.bands:
            raise ValueError("raster needs at least one band")
        shapes = {p.shape for p in self.bands.values()}
        if len(shapes) != 1:
            raise ValueError(f"band planes disagree in shape: {shapes}")
        self.bands = {
            name: np.asarray(plane, dtype=np.float32)
            for name, plane in self.bands.items()
        }

    @property
    def height(self) -> int:
        return next(iter(self.bands.values())).shape[0]

    @property
    def width(self) -> int:
        return next(iter(self.bands.values())).shape[1]

    @property
    def band_names(self) -> list[str]:
        return list(self.bands.keys())

    def nodata_mask(self, plane: np.ndarray) -> np.ndarray:
        """Boolean mask of nodata pixels in one plane."""
        if math.isnan(self.nodata):
            return np.isnan(plane)
        return plane == self.nodata


def write_geotiff(r: Raster, path) -> None:
    imgs = [Image.fromarray(plane, mode="F") for plane in r.bands.values()]
    info = TiffImagePlugin.ImageFileDirectory_v2()
    info[TAG_IMAGE_DESCRIPTION] = json.dumps({"bands": r.band_names})
    info.tagtype[TAG_GDAL_NODATA] = 2  # ASCII
    info[TAG_GDAL_NODATA] = "nan" if math.isnan(r.nodata) else repr(r.nodata)
    gt = r.geo_transform
    info.tagtype[TAG_MODEL_PIXEL_SCALE] = 12  # double
    info[TAG_MODEL_PIXEL_SCALE] = (abs(gt.pixel_deg_lon), abs(gt.pixel_deg_lat), 0.0)
    info.tagtype[TAG_MODEL_TIEPOINT] = 12
    info[TAG_MODEL_TIEPOINT] = (0.0, 0.0, 0.0, gt.origin_lon, gt.origin_lat, 0.0)
    imgs[0].save(path, format="TIFF", save_all=True,
                 append_images=imgs[1:], tiffinfo=info)


def read_geotiff(path) -> Raster:
    try:
        im = Image.open(path)
        im.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        raise CorruptFile(f"cannot read GeoTIFF {path}: {e}") from e
    if im.format != "TIFF":
        raise UnsupportedLayout(f"{path} is not a TIFF file")
    tags = im.tag_v2
    try:
        meta = json.loads(tags.get(TAG_IMAGE_DESCRIPTION, "{}"))
        names = meta.get("bands")
    except json.JSONDecodeError:
        names = None
    nodata_str = tags.get(TAG_GDAL_NODATA, "nan")
    nodata = float(nodata_str)
    scale = tags.get(TAG_MODEL_PIXEL_SCALE, (0.0, 0.0, 0.0))
    tie = tags.get(TAG_MODEL_TIEPOINT, (0.0,) * 6)
    gt = GeoTransform(origin_lat=float(tie[4]), origin_lon=float(tie[3]),
                      pixel_deg_lat=-abs(float(scale[1])),
                      pixel_deg_lon=abs(float(scale[0])))
    planes = []
    try:
        for frame in range(im.n_frames):
            im.seek(frame)
            if im.mode not in ("F", "I;16", "I", "L"):
                raise UnsupportedLayout(f"unsupported sample type {im.mode} in {path}")
            planes.append(np.asarray(im, dtype=np.float32))
    except (OSError, SyntaxError) as e:
        raise CorruptFile(f"truncated GeoTIFF {path}: {e}") from e
    if names is None or len(names) != len(planes):
        names = [f"band_{i + 1}" for i in range(len(planes))]
    return Raster(bands=dict(zip(names, planes)), nodata=nodata, geo_transform=gt)


def geotiff_bytes(r: Raster) -> bytes:
    buf = io.BytesIO()
    write_geotiff(r, buf)
    return buf.getvalue()


def read_geotiff_bytes(data: bytes) -> Raster:
    return read_geotiff(io.BytesIO(data))


def quantize_u8(x) -> np.ndarray:
    """Clamp to [0, 1] then round(x * 255) half away from zero.

    Accepts scalars or arrays; NaNs map to 0.
    """
    arr = np.asarray(x, dtype=np.float64).copy()
    arr[np.isnan(arr)] = 0.0
    np.clip(arr, 0.0, 1.0, out=arr)
    # np.round is banker's rounding; floor(x + 0.5) is half-away-from-zero
    # for non-negative values, which is all we have after clamping
    arr *= 255.0
    arr += 0.5
    out = np.floor(arr, out=arr).astype(np.uint8)
    return out if out.ndim else out[()]


# PNG output stays lossless at any level; bulk artifact writes favor speed
PNG_COMPRESS_LEVEL = 0


def write_png_gray(plane: np.ndarray, path) -> None:
    plane = np.asarray(plane)
    if plane.dtype != np.uint8:
        raise ValueError("plane must be uint8; quantize first")
    Image.fromarray(plane, mode="L").save(path, format="PNG",
                                          compress_level=PNG_COMPRESS_LEVEL)


def write_png_rgb(r: np.ndarray, g: np.ndarray, b: np.ndarray, path) -> None:
    planes = [np.asarray(p) for p in (r, g, b)]
    if any(p.dtype != np.uint8 for p in planes):
        raise ValueError("planes must be uint8; quantize first")
    if len({p.shape for p in planes}) != 1:
        raise ValueError("RGB planes disagree in shape")
    Image.fromarray(np.stack(planes, axis=-1), mode="RGB").save(
        path, format="PNG", compress_level=PNG_COMPRESS_LEVEL)


def read_png(path) -> np.ndarray:
    """uint8 array, HxW for grayscale or HxWx3 for RGB."""
    with Image.open(path) as im:
        return np.asarray(im)
