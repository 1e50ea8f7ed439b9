"""eoforge: automated dataset builder for satellite-imagery machine learning."""

from .geosample import GeoPoint, SamplerConfig, SceneFootprint, WaterMask
from .raster import Raster
from .store import DatasetManifest, Satellite

__version__ = "0.1.0"

__all__ = [
    "GeoPoint", "SamplerConfig", "SceneFootprint", "WaterMask",
    "Raster", "DatasetManifest", "Satellite", "__version__",
]
