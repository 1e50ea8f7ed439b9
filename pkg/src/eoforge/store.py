"""On-disk dataset layout and the JSON manifest.

Layout: <root>/Sentinel-1|Sentinel-2/scene_{id:04}/{YYYY-MM}/{raw|img}_{rank}.{tif|png}
The manifest is a single schema-versioned JSON document committed atomically
(write-temp-then-rename); it records every candidate, quality report,
keep/discard decision and per-stage status.
"""

from __future__ import annotations

import json
import os
import re
import uuid
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import CorruptManifest, SchemaMismatch
from .geosample import GeoPoint

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"

STAGES = ("generate", "download", "convert", "clean", "extract")


class Satellite(str, Enum):
    S1 = "S1"
    S2 = "S2"

    @property
    def folder(self) -> str:
        return "Sentinel-1" if self is Satellite.S1 else "Sentinel-2"

    @classmethod
    def from_folder(cls, name: str) -> "Satellite":
        return {"Sentinel-1": cls.S1, "Sentinel-2": cls.S2}[name]


class StageStatus(str, Enum):
    NOT_RUN = "not_run"
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"


class Decision(str, Enum):
    PENDING = "pending"
    KEEP = "keep"
    DISCARD = "discard"


class DecidedBy(str, Enum):
    AUTO = "auto"
    HUMAN = "human"


_LAYOUT_RE = re.compile(
    r"(Sentinel-[12])/scene_(\d{4})/(\d{4}-\d{2})/(raw|img)_(\d+)\.(tif|png)$"
)


def layout_path(root, satellite: Satellite, scene_id: int, month: str,
                candidate_rank: int, kind: str) -> Path:
    """Canonical candidate file location. kind is 'raw' or 'converted'."""
    if kind == "raw":
        stem, ext = "raw", "tif"
    elif kind == "converted":
        stem, ext = "img", "png"
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return (Path(root) / satellite.folder / f"scene_{scene_id:04d}"
            / month / f"{stem}_{candidate_rank}.{ext}")


def parse_layout_path(path) -> tuple[Satellite, int, str, int, str]:
    """Invert layout_path; returns (satellite, scene_id, month, rank, kind)."""
    m = _LAYOUT_RE.search(Path(path).as_posix())
    if not m:
        raise ValueError(f"not a layout path: {path}")
    sat = Satellite.from_folder(m.group(1))
    kind = "raw" if m.group(4) == "raw" else "converted"
    return sat, int(m.group(2)), m.group(3), int(m.group(5)), kind


@dataclass
class CandidateRecord:
    path: str                       # raw raster, relative to the dataset root
    rank: int
    product_id: str = ""
    acquired_at: str = ""           # ISO timestamp
    img_path: str | None = None     # converted image, once the converter ran
    report: dict | None = None
    decision: Decision = Decision.PENDING
    decided_by: DecidedBy | None = None

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "rank": self.rank,
            "product_id": self.product_id,
            "acquired_at": self.acquired_at,
            "img_path": self.img_path,
            "report": self.report,
            "decision": self.decision.value,
            "decided_by": self.decided_by.value if self.decided_by else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CandidateRecord":
        return cls(
            path=d["path"], rank=d["rank"], product_id=d.get("product_id", ""),
            acquired_at=d.get("acquired_at", ""), img_path=d.get("img_path"),
            report=d.get("report"), decision=Decision(d.get("decision", "pending")),
            decided_by=DecidedBy(d["decided_by"]) if d.get("decided_by") else None,
        )


@dataclass
class SatMonthRecord:
    candidates: list[CandidateRecord] = field(default_factory=list)
    selected: str | None = None     # path of the chosen image, relative to root
    unfavorable: bool = False

    def to_dict(self) -> dict:
        return {
            "candidates": [c.to_dict() for c in self.candidates],
            "selected": self.selected,
            "unfavorable": self.unfavorable,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SatMonthRecord":
        return cls(
            candidates=[CandidateRecord.from_dict(c) for c in d.get("candidates", [])],
            selected=d.get("selected"),
            unfavorable=d.get("unfavorable", False),
        )


@dataclass
class MonthRecord:
    month: str                      # YYYY-MM
    satellites: dict[str, SatMonthRecord] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "month": self.month,
            "satellites": {k: v.to_dict() for k, v in sorted(self.satellites.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MonthRecord":
        return cls(
            month=d["month"],
            satellites={k: SatMonthRecord.from_dict(v)
                        for k, v in d.get("satellites", {}).items()},
        )


@dataclass
class RegionRecord:
    scene_id: int
    center: GeoPoint
    months: list[MonthRecord] = field(default_factory=list)

    def month(self, month: str) -> MonthRecord:
        for m in self.months:
            if m.month == month:
                return m
        rec = MonthRecord(month=month)
        self.months.append(rec)
        self.months.sort(key=lambda m: m.month)
        return rec

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "center": {"lat": self.center.lat, "lon": self.center.lon},
            "months": [m.to_dict() for m in self.months],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegionRecord":
        return cls(
            scene_id=d["scene_id"],
            center=GeoPoint(d["center"]["lat"], d["center"]["lon"]),
            months=[MonthRecord.from_dict(m) for m in d.get("months", [])],
        )


@dataclass
class DatasetManifest:
    version: int = MANIFEST_VERSION
    regions: list[RegionRecord] = field(default_factory=list)
    stage_status: dict[str, StageStatus] = field(
        default_factory=lambda: {s: StageStatus.NOT_RUN for s in STAGES})

    def region(self, scene_id: int) -> RegionRecord:
        for r in self.regions:
            if r.scene_id == scene_id:
                return r
        raise KeyError(f"no region with scene_id {scene_id}")

    def slots(self):
        """Yield (region, month_record, satellite_key, sat_month_record)."""
        for region in self.regions:
            for month in region.months:
                for sat_key, rec in sorted(month.satellites.items()):
                    yield region, month, sat_key, rec

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "stage_status": {s: self.stage_status[s].value for s in STAGES},
            "regions": [r.to_dict() for r in self.regions],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        if d.get("version") != MANIFEST_VERSION:
            raise SchemaMismatch(
                f"manifest version {d.get('version')} != {MANIFEST_VERSION}")
        return cls(
            version=d["version"],
            regions=[RegionRecord.from_dict(r) for r in d.get("regions", [])],
            stage_status={s: StageStatus(d.get("stage_status", {}).get(s, "not_run"))
                          for s in STAGES},
        )


def manifest_path(root) -> Path:
    return Path(root) / MANIFEST_NAME


def commit_manifest(m: DatasetManifest, root) -> None:
    """Atomic replace: write a unique temp file then rename over the target."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    target = manifest_path(root)
    tmp = root / f".{MANIFEST_NAME}.{os.getpid()}.{uuid.uuid4().hex}.tmp"
    tmp.write_text(json.dumps(m.to_dict(), indent=2) + "\n", encoding="utf-8")
    os.replace(tmp, target)


def load_manifest(root) -> DatasetManifest:
    path = manifest_path(root)
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CorruptManifest(f"unreadable manifest at {path}: {e}") from e
    m = DatasetManifest.from_dict(d)
    validate_manifest(m, root)
    return m


def validate_manifest(m: DatasetManifest, root) -> None:
    root = Path(root)
    for region, month, sat_key, rec in m.slots():
        if rec.selected is None:
            continue
        if not (root / rec.selected).exists():
            raise CorruptManifest(
                f"selected file missing on disk: {rec.selected} "
                f"(scene {region.scene_id}, {month.month}, {sat_key})")
        kept = {c.path for c in rec.candidates if c.decision is Decision.KEEP}
        kept |= {c.img_path for c in rec.candidates
                 if c.decision is Decision.KEEP and c.img_path}
        if rec.selected not in kept:
            raise CorruptManifest(
                f"selected {rec.selected} does not match a keep-decided candidate")


def export_points_geojson(m: DatasetManifest) -> dict:
    """GeoJSON FeatureCollection of scene centers for the world map."""
    features = []
    for region in m.regions:
        months_done = sum(
            1 for month in region.months
            if month.satellites and all(rec.selected is not None or rec.unfavorable
                                        for rec in month.satellites.values())
        )
        unfavorable = sum(rec.unfavorable
                          for month in region.months
                          for rec in month.satellites.values())
        features.append({
            "type": "Feature",
            "geometry": {
                "type": "Point",
                "coordinates": [round(region.center.lon, 6), round(region.center.lat, 6)],
            },
            "properties": {
                "scene_id": region.scene_id,
                "months_done": months_done,
                "unfavorable_count": unfavorable,
            },
        })
    return {"type": "FeatureCollection", "features": features}
