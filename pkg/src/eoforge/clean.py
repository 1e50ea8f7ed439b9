"""Candidate quality scoring and best-of-month selection.

Each candidate gets a missing-data fraction (nodata, black fill, or
border-touching gray fill) and a QA60-based cloud fraction; the composite
score is their sum. Per (satellite, scene, month) the lowest-scoring passing
candidate is kept, the rest move to a discarded/ sibling folder so the manual
review queue can resurrect them.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from .catalog import QA60_CIRRUS_BIT, QA60_OPAQUE_CLOUD_BIT
from .errors import AlreadyResolved, UnknownItem
from .raster import Raster, read_geotiff
from .store import (CandidateRecord, DatasetManifest, DecidedBy, Decision,
                    Satellite, commit_manifest, load_manifest)

log = logging.getLogger(__name__)

QA60_BAND = "QA60"
IMAGE_BANDS_EXCLUDED = {QA60_BAND}

GRAY_FILL_MIN_AREA = 0.01        # border rectangle must cover >= 1% of pixels
BRIGHTNESS_FALLBACK_CUTOFF = 0.9  # of full scale, when QA60 is absent


@dataclass
class Thresholds:
    missing_max: float = 0.05
    cloud_max: float = 0.30
    black_threshold: float = 1e-4  # of full scale
    full_scale: float = 1.0


@dataclass
class QualityReport:
    missing_fraction: float
    cloud_fraction: float
    score: float
    verdict: str                     # "pass" | "fail"
    thresholds_used: tuple[float, float]
    low_confidence: bool = False     # cloud estimate from brightness fallback

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return {
            "missing_fraction": self.missing_fraction,
            "cloud_fraction": self.cloud_fraction,
            "score": self.score,
            "verdict": self.verdict,
            "thresholds_used": list(self.thresholds_used),
            "low_confidence": self.low_confidence,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QualityReport":
        return cls(
            missing_fraction=d["missing_fraction"],
            cloud_fraction=d["cloud_fraction"], score=d["score"],
            verdict=d["verdict"],
            thresholds_used=tuple(d["thresholds_used"]),
            low_confidence=d.get("low_confidence", False),
        )


def make_report(missing: float, cloud: float, thresholds: Thresholds,
                low_confidence: bool = False) -> QualityReport:
    passed = (missing <= thresholds.missing_max
              and cloud <= thresholds.cloud_max)
    return QualityReport(
        missing_fraction=missing, cloud_fraction=cloud, score=missing + cloud,
        verdict="pass" if passed else "fail",
        thresholds_used=(thresholds.missing_max, thresholds.cloud_max),
        low_confidence=low_confidence)


def _image_planes(r: Raster) -> list[np.ndarray]:
    return [p for name, p in r.bands.items() if name not in IMAGE_BANDS_EXCLUDED]


def _gray_fill_mask(planes: list[np.ndarray], valid: np.ndarray) -> np.ndarray:
    """Pixels inside a border-touching constant-valued rectangle >= 1% area.

    Candidate fill values are values of the first plane repeated often enough
    to possibly form such a rectangle; a value qualifies when its equal-valued
    pixel set (across all planes) exactly fills its bounding box and that box
    touches an image border.
    """
    h, w = planes[0].shape
    total = h * w
    min_area = max(int(GRAY_FILL_MIN_AREA * total), 1)
    out = np.zeros((h, w), dtype=bool)
    first = np.where(valid, planes[0], np.nan)
    values, counts = np.unique(first[~np.isnan(first)], return_counts=True)
    for v in values[counts >= min_area]:
        mask = valid.copy()
        for p in planes:
            mask &= p == v
        area = int(mask.sum())
        if area < min_area:
            continue
        rows = np.flatnonzero(mask.any(axis=1))
        cols = np.flatnonzero(mask.any(axis=0))
        r0, r1, c0, c1 = rows[0], rows[-1], cols[0], cols[-1]
        if area != (r1 - r0 + 1) * (c1 - c0 + 1):
            continue  # not a solid rectangle
        if r0 > 0 and r1 < h - 1 and c0 > 0 and c1 < w - 1:
            continue  # interior; gray fill hugs a border
        out |= mask
    return out


def missing_fraction(r: Raster, thresholds: Thresholds | None = None) -> float:
    """Fraction of pixels flagged missing.

    A pixel is missing when every image band is nodata, every band is below
    the black threshold, or it sits inside a detected gray-fill rectangle.
    """
    thresholds = thresholds or Thresholds()
    planes = _image_planes(r)
    if not planes:
        planes = list(r.bands.values())
    nodata = np.ones(planes[0].shape, dtype=bool)
    black = np.ones(planes[0].shape, dtype=bool)
    for p in planes:
        mask = r.nodata_mask(p)
        nodata &= mask
        black &= ~mask & (p < thresholds.black_threshold * thresholds.full_scale)
    gray = _gray_fill_mask(planes, ~nodata)
    missing = nodata | black | gray
    return float(missing.mean())


def cloud_fraction(qa60: np.ndarray) -> float:
    """Fraction of pixels with the opaque-cloud (10) or cirrus (11) bit set."""
    ints = np.nan_to_num(np.asarray(qa60), nan=0.0).astype(np.int64)
    bits = (1 << QA60_OPAQUE_CLOUD_BIT) | (1 << QA60_CIRRUS_BIT)
    return float(((ints & bits) != 0).mean())


def _brightness_cloud_fraction(r: Raster, thresholds: Thresholds) -> float:
    """QA60 fallback: pixels bright in every image band."""
    cutoff = BRIGHTNESS_FALLBACK_CUTOFF * thresholds.full_scale
    bright = np.ones((r.height, r.width), dtype=bool)
    for p in _image_planes(r):
        bright &= ~r.nodata_mask(p) & (p > cutoff)
    return float(bright.mean())


def score_candidate(r: Raster, satellite: Satellite,
                    thresholds: Thresholds | None = None) -> QualityReport:
    thresholds = thresholds or Thresholds()
    missing = missing_fraction(r, thresholds)
    low_confidence = False
    if satellite is Satellite.S1:
        cloud = 0.0
    elif QA60_BAND in r.bands:
        cloud = cloud_fraction(r.bands[QA60_BAND])
    else:
        log.warning("S2 raster without QA60; brightness fallback in use")
        cloud = _brightness_cloud_fraction(r, thresholds)
        low_confidence = True
    return make_report(missing, cloud, thresholds, low_confidence)


def select_best(reports: list[QualityReport],
                acquired_at: list[datetime | str] | None = None) -> int | None:
    """Index of the minimum-score passing report; ties go to the earliest
    acquisition; None when nothing passes."""
    best = None
    for i, rep in enumerate(reports):
        if not rep.passed:
            continue
        tie = acquired_at[i] if acquired_at else i
        key = (rep.score, tie, i)
        if best is None or key < best[0]:
            best = (key, i)
    return best[1] if best else None


# ---------------------------------------------------------------------------
# store-level cleaning and the review queue
# ---------------------------------------------------------------------------

@dataclass
class ReviewItem:
    item_id: str
    path: str
    img_path: str | None
    report: dict | None
    decision: str
    decided_by: str | None


@dataclass
class CleanReport:
    kept: int = 0
    discarded: int = 0
    unfavorable: int = 0
    pending: int = 0
    errors: list[str] = field(default_factory=list)


def _item_id(sat_key: str, scene_id: int, month: str, rank: int) -> str:
    return f"{sat_key}-{scene_id:04d}-{month}-{rank}"


def _parse_item_id(item_id: str) -> tuple[str, int, str, int]:
    sat, scene, year, mo, rank = item_id.split("-")
    return sat, int(scene), f"{year}-{mo}", int(rank)


def _move_candidate(root: Path, cand: CandidateRecord, to_discarded: bool) -> None:
    """Relocate a candidate's files between the month dir and discarded/."""
    for attr in ("path", "img_path"):
        rel = getattr(cand, attr)
        if not rel:
            continue
        src = root / rel
        p = Path(rel)
        in_discarded = p.parent.name == "discarded"
        if to_discarded == in_discarded:
            continue
        if to_discarded:
            dst_rel = p.parent / "discarded" / p.name
        else:
            dst_rel = p.parent.parent / p.name
        dst = root / dst_rel
        if src.exists():
            dst.parent.mkdir(parents=True, exist_ok=True)
            src.replace(dst)
        setattr(cand, attr, dst_rel.as_posix())


def _candidate_selected_path(cand: CandidateRecord) -> str:
    return cand.img_path if cand.img_path else cand.path


def _score_slot(root: Path, rec, thresholds: Thresholds,
                sat: Satellite, errors: list[str]) -> list[QualityReport | None]:
    reports: list[QualityReport | None] = []
    for cand in rec.candidates:
        if cand.report is not None:
            # fractions are threshold-independent; re-derive only the verdict
            prev = QualityReport.from_dict(cand.report)
            rep = make_report(prev.missing_fraction, prev.cloud_fraction,
                              thresholds, prev.low_confidence)
        else:
            try:
                raster = read_geotiff(root / cand.path)
                rep = score_candidate(raster, sat, thresholds)
            except Exception as e:
                errors.append(f"{cand.path}: {e}")
                rep = make_report(1.0, 0.0, thresholds)  # unreadable => missing
        cand.report = rep.to_dict()
        reports.append(rep)
    return reports


def _prescore(root: Path, m: DatasetManifest, thresholds: Thresholds,
              workers: int) -> None:
    """Score unscored candidates in parallel; scoring is pure per image.

    Failures are left unscored so _score_slot records them serially.
    """
    todo = [(Satellite(sat_key), cand)
            for _, _, sat_key, rec in m.slots()
            for cand in rec.candidates if cand.report is None]
    if len(todo) < 2 or workers < 2:
        return

    def _one(sat: Satellite, cand: CandidateRecord) -> None:
        raster = read_geotiff(root / cand.path)
        cand.report = score_candidate(raster, sat, thresholds).to_dict()

    with ThreadPoolExecutor(max_workers=workers) as pool:
        for future in [pool.submit(_one, sat, cand) for sat, cand in todo]:
            try:
                future.result()
            except Exception:
                pass  # re-attempted (and reported) by _score_slot


def clean_auto(root, thresholds: Thresholds | None = None,
               manual: bool = False,
               manifest: DatasetManifest | None = None,
               workers: int = 1) -> CleanReport:
    """Score every candidate and decide keep/discard per slot.

    Manual mode only scores and leaves every undecided candidate Pending for
    the review queue. Human decisions are never overridden here.
    """
    thresholds = thresholds or Thresholds()
    root = Path(root)
    m = manifest if manifest is not None else load_manifest(root)
    report = CleanReport()
    _prescore(root, m, thresholds, workers)

    for region, month, sat_key, rec in m.slots():
        if not rec.candidates:
            rec.unfavorable = True
            report.unfavorable += 1
            continue
        sat = Satellite(sat_key)
        reports = _score_slot(root, rec, thresholds, sat, report.errors)

        if manual:
            report.pending += sum(
                1 for c in rec.candidates if c.decided_by is not DecidedBy.HUMAN)
            continue

        human_keeps = [i for i, c in enumerate(rec.candidates)
                       if c.decided_by is DecidedBy.HUMAN
                       and c.decision is Decision.KEEP]
        if human_keeps:
            best = human_keeps[0]
        else:
            auto_idx = [i for i, c in enumerate(rec.candidates)
                        if c.decided_by is not DecidedBy.HUMAN]
            sub = select_best([reports[i] for i in auto_idx],
                              [rec.candidates[i].acquired_at for i in auto_idx])
            best = auto_idx[sub] if sub is not None else None

        for i, cand in enumerate(rec.candidates):
            if cand.decided_by is DecidedBy.HUMAN:
                continue
            cand.decision = Decision.KEEP if i == best else Decision.DISCARD
            cand.decided_by = DecidedBy.AUTO
            _move_candidate(root, cand, to_discarded=(i != best))

        if best is not None:
            rec.selected = _candidate_selected_path(rec.candidates[best])
            rec.unfavorable = False
            report.kept += 1
            report.discarded += len(rec.candidates) - 1
        else:
            rec.selected = None
            rec.unfavorable = True
            report.unfavorable += 1
            report.discarded += len(rec.candidates)

    if manifest is None:
        commit_manifest(m, root)
    return report


def list_pending(root, manifest: DatasetManifest | None = None) -> list[ReviewItem]:
    m = manifest if manifest is not None else load_manifest(root)
    items = []
    for region, month, sat_key, rec in m.slots():
        for cand in rec.candidates:
            if cand.decision is Decision.PENDING:
                items.append(ReviewItem(
                    item_id=_item_id(sat_key, region.scene_id, month.month, cand.rank),
                    path=cand.path, img_path=cand.img_path, report=cand.report,
                    decision=cand.decision.value,
                    decided_by=cand.decided_by.value if cand.decided_by else None))
    return items


def resolve_review(root, item_id: str, decision: str) -> None:
    """Apply a human keep/discard; the only path that overrides an Auto call."""
    if decision not in ("keep", "discard"):
        raise ValueError(f"decision must be keep or discard, got {decision!r}")
    root = Path(root)
    m = load_manifest(root)
    sat_key, scene_id, month_str, rank = _parse_item_id(item_id)

    target = None
    for region, month, sk, rec in m.slots():
        if (region.scene_id == scene_id and month.month == month_str
                and sk == sat_key):
            for cand in rec.candidates:
                if cand.rank == rank:
                    target = (rec, cand)
    if target is None:
        raise UnknownItem(item_id)
    rec, cand = target
    if cand.decided_by is DecidedBy.HUMAN:
        raise AlreadyResolved(item_id)

    cand.decision = Decision(decision)
    cand.decided_by = DecidedBy.HUMAN
    if cand.decision is Decision.KEEP:
        _move_candidate(root, cand, to_discarded=False)
        rec.selected = _candidate_selected_path(cand)
        rec.unfavorable = False
    else:
        was_selected = rec.selected in (cand.path, cand.img_path)
        _move_candidate(root, cand, to_discarded=True)
        if was_selected:
            keeps = [c for c in rec.candidates
                     if c is not cand and c.decision is Decision.KEEP]
            rec.selected = _candidate_selected_path(keeps[0]) if keeps else None
    commit_manifest(m, root)
