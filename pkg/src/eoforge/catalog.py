"""Catalog providers and the monthly download plan.

A provider exposes two calls: search (month window -> product descriptors)
and fetch_bands (descriptor -> clipped raster). Two implementations ship:
an HTTP client for a JSON search + GeoTIFF fetch catalog, and a deterministic
mock that synthesizes pixel data with injectable clouds and missing regions.
"""

from __future__ import annotations

import hashlib
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
import requests

from .errors import (BandUnavailable, EmptyDateRange, MalformedResponse,
                     ProviderUnavailable, TruncatedPayload)
from .geosample import GeoPoint, SceneFootprint, footprint_of
from .raster import GeoTransform, Raster, read_geotiff_bytes, write_geotiff
from .store import Satellite, layout_path

DEFAULT_BANDS = {
    Satellite.S2: ["B4", "B3", "B2", "QA60"],
    Satellite.S1: ["VV"],
}

QA60_OPAQUE_CLOUD_BIT = 10
QA60_CIRRUS_BIT = 11


@dataclass(frozen=True)
class ProductQuery:
    footprint: SceneFootprint
    satellite: Satellite
    window: tuple[datetime, datetime]
    bands: list[str]
    max_candidates: int = 3

    def __post_init__(self):
        if self.window[0] >= self.window[1]:
            raise ValueError("query window must be ordered")
        if not self.bands:
            raise ValueError("query needs at least one band")
        if self.max_candidates < 1:
            raise ValueError("max_candidates must be >= 1")


@dataclass(frozen=True)
class ProductDescriptor:
    product_id: str
    satellite: Satellite
    acquired_at: datetime
    available_bands: list[str]
    cloud_pct_meta: float | None = None  # S2 only


@dataclass(frozen=True)
class DownloadTask:
    scene_id: int
    satellite: Satellite
    month: str               # YYYY-MM
    candidate_rank: int
    query: ProductQuery


@dataclass
class DownloadPlan:
    tasks: list[DownloadTask]
    months: list[str]


@dataclass
class RetryPolicy:
    max_attempts: int = 4
    backoff_initial_s: float = 0.5
    backoff_multiplier: float = 2.0
    rate_limit: int = 4
    timeout_s: float = 30.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.backoff_initial_s <= 0 or self.backoff_multiplier <= 0:
            raise ValueError("backoff delays must be positive")


@dataclass
class PlanConfig:
    start_month: str                      # YYYY-MM
    months: int = 12
    satellites: list[Satellite] = field(
        default_factory=lambda: [Satellite.S1, Satellite.S2])
    max_candidates: int = 3
    scene_size_px: int = 1000
    gsd_m: float = 10.0
    bands: dict[Satellite, list[str]] = field(
        default_factory=lambda: {s: list(b) for s, b in DEFAULT_BANDS.items()})


def month_window(month: str) -> tuple[datetime, datetime]:
    """[first instant of month, first instant of the next month)."""
    start = datetime.strptime(month, "%Y-%m").replace(tzinfo=timezone.utc)
    if start.month == 12:
        end = start.replace(year=start.year + 1, month=1)
    else:
        end = start.replace(month=start.month + 1)
    return start, end


def month_sequence(start_month: str, months: int) -> list[str]:
    start = datetime.strptime(start_month, "%Y-%m")
    out = []
    y, m = start.year, start.month
    for _ in range(months):
        out.append(f"{y:04d}-{m:02d}")
        m += 1
        if m > 12:
            y, m = y + 1, 1
    return out


def plan_downloads(points: list[GeoPoint], cfg: PlanConfig) -> DownloadPlan:
    """Enumerate every (scene, satellite, month, candidate) download cell.

    Ordering is deterministic: scenes in input order, then months
    chronologically, then satellites (S1 before S2), then candidate rank.
    """
    if not points:
        raise ValueError("no points to plan for")
    if cfg.months < 1:
        raise EmptyDateRange(f"months must be >= 1, got {cfg.months}")
    months = month_sequence(cfg.start_month, cfg.months)
    sats = sorted(cfg.satellites, key=lambda s: s.value)
    tasks = []
    for scene_id, point in enumerate(points):
        fp = footprint_of(point, cfg.scene_size_px, cfg.gsd_m)
        for month in months:
            for sat in sats:
                q = ProductQuery(
                    footprint=fp, satellite=sat, window=month_window(month),
                    bands=list(cfg.bands[sat]), max_candidates=cfg.max_candidates)
                for rank in range(cfg.max_candidates):
                    tasks.append(DownloadTask(scene_id, sat, month, rank, q))
    return DownloadPlan(tasks=tasks, months=months)


def _mid_window(window: tuple[datetime, datetime]) -> datetime:
    return window[0] + (window[1] - window[0]) / 2


def rank_candidates(descs: list[ProductDescriptor],
                    q: ProductQuery) -> list[ProductDescriptor]:
    """S2: ascending cloud metadata, then temporal centrality. S1: centrality."""
    mid = _mid_window(q.window)

    def key(d: ProductDescriptor):
        centrality = abs((d.acquired_at - mid).total_seconds())
        if q.satellite is Satellite.S2:
            cloud = d.cloud_pct_meta if d.cloud_pct_meta is not None else math.inf
            return (cloud, centrality)
        return (centrality,)

    return sorted(descs, key=key)


def _with_retry(fn, policy: RetryPolicy, sleep=time.sleep):
    delay = policy.backoff_initial_s
    attempts = 0
    while True:
        attempts += 1
        try:
            return fn(), attempts
        except (ProviderUnavailable, TruncatedPayload):
            if attempts >= policy.max_attempts:
                raise
            sleep(delay)
            delay *= policy.backoff_multiplier


def query(provider, q: ProductQuery,
          policy: RetryPolicy | None = None) -> list[ProductDescriptor]:
    """Ranked candidate list, at most q.max_candidates long."""
    policy = policy or RetryPolicy()
    descs, _ = _with_retry(lambda: provider.search(q), policy)
    start, end = q.window
    descs = [d for d in descs if start <= d.acquired_at < end]
    return rank_candidates(descs, q)[:q.max_candidates]


def fetch(provider, d: ProductDescriptor, bands: list[str],
          footprint: SceneFootprint,
          policy: RetryPolicy | None = None) -> Raster:
    """Clipped multi-band raster for one product, with transport retries."""
    policy = policy or RetryPolicy()
    missing = [b for b in bands if b not in d.available_bands]
    if missing:
        raise BandUnavailable(
            f"{d.product_id} lacks bands {missing}; has {d.available_bands}")
    raster, _ = _with_retry(lambda: provider.fetch_bands(d, bands, footprint),
                            policy)
    return raster


def footprint_transform(fp: SceneFootprint) -> GeoTransform:
    lat_min, lon_min, lat_max, lon_max = fp.bbox
    n = max(fp.size_px, 1)
    return GeoTransform(
        origin_lat=lat_max, origin_lon=lon_min,
        pixel_deg_lat=-(lat_max - lat_min) / n,
        pixel_deg_lon=(lon_max - lon_min) / n)


# ---------------------------------------------------------------------------
# mock provider
# ---------------------------------------------------------------------------

@dataclass
class Defect:
    """Injected flaw for matching (scene, satellite, month, rank) cells.

    None fields are wildcards. Fractions are exact pixel shares.
    """
    scene_id: int | None = None
    satellite: Satellite | None = None
    month: str | None = None
    rank: int | None = None
    cloud_fraction: float = 0.0
    missing_fraction: float = 0.0
    absent: bool = False
    cloud_pct_meta: float | None = None

    def matches(self, scene_id, satellite, month, rank) -> bool:
        return ((self.scene_id is None or self.scene_id == scene_id)
                and (self.satellite is None or self.satellite == satellite)
                and (self.month is None or self.month == month)
                and (self.rank is None or self.rank == rank))


@dataclass
class Scenario:
    defects: list[Defect] = field(default_factory=list)

    def lookup(self, scene_id, satellite, month, rank) -> Defect | None:
        for d in self.defects:
            if d.matches(scene_id, satellite, month, rank):
                return d
        return None


S2_MOCK_BANDS = ["B2", "B3", "B4", "B8", "QA60"]
S1_MOCK_BANDS = ["VV", "VH"]


def _stable_rng(*parts) -> np.random.Generator:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


class MockProvider:
    """Deterministic synthetic catalog.

    Pixel values are seeded hash fields; scenario defects inject exact-area
    cloud regions (QA60 bits set, optical bands brightened) and nodata
    regions. Scene ids are assigned in footprint first-seen order, which
    matches the download plan's deterministic task ordering.
    """

    candidates_per_month = 3

    def __init__(self, seed: int = 0, scenario: Scenario | None = None):
        self.seed = seed
        self.scenario = scenario or Scenario()
        self._scene_ids: dict[tuple[float, float], int] = {}
        self._lock = threading.Lock()
        self._in_flight = 0
        self.max_in_flight = 0

    def _scene_id_of(self, fp: SceneFootprint) -> int:
        key = (round(fp.center.lat, 6), round(fp.center.lon, 6))
        with self._lock:
            if key not in self._scene_ids:
                self._scene_ids[key] = len(self._scene_ids)
            return self._scene_ids[key]

    def _enter(self):
        with self._lock:
            self._in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self._in_flight)

    def _exit(self):
        with self._lock:
            self._in_flight -= 1

    def search(self, q: ProductQuery) -> list[ProductDescriptor]:
        self._enter()
        try:
            scene_id = self._scene_id_of(q.footprint)
            month = q.window[0].strftime("%Y-%m")
            descs = []
            for rank in range(self.candidates_per_month):
                defect = self.scenario.lookup(scene_id, q.satellite, month, rank)
                if defect and defect.absent:
                    continue
                pid = f"{q.satellite.value}-{scene_id:04d}-{month}-{rank}"
                day = 5 + 9 * rank  # spread inside the month: 5th, 14th, 23rd
                acquired = q.window[0] + timedelta(days=day - 1, hours=10)
                cloud_meta = None
                if q.satellite is Satellite.S2:
                    if defect and defect.cloud_pct_meta is not None:
                        cloud_meta = defect.cloud_pct_meta
                    elif defect and defect.cloud_fraction > 0:
                        cloud_meta = 100.0 * defect.cloud_fraction
                    else:
                        cloud_meta = float(_stable_rng(
                            self.seed, pid, "meta").uniform(0, 20))
                bands = (S2_MOCK_BANDS if q.satellite is Satellite.S2
                         else S1_MOCK_BANDS)
                descs.append(ProductDescriptor(
                    product_id=pid, satellite=q.satellite, acquired_at=acquired,
                    available_bands=list(bands), cloud_pct_meta=cloud_meta))
            return descs
        finally:
            self._exit()

    def fetch_bands(self, d: ProductDescriptor, bands: list[str],
                    fp: SceneFootprint) -> Raster:
        self._enter()
        try:
            return self._synthesize(d, bands, fp)
        finally:
            self._exit()

    def _synthesize(self, d: ProductDescriptor, bands: list[str],
                    fp: SceneFootprint) -> Raster:
        missing = [b for b in bands if b not in d.available_bands]
        if missing:
            raise BandUnavailable(f"{d.product_id} lacks bands {missing}")
        sat, scene_str, year, mo, rank = d.product_id.split("-")
        scene_id = int(scene_str)
        month = f"{year}-{mo}"
        defect = self.scenario.lookup(scene_id, d.satellite, month, int(rank))
        n = fp.size_px
        total = n * n
        cloud_px = round((defect.cloud_fraction if defect else 0.0) * total)
        missing_px = round((defect.missing_fraction if defect else 0.0) * total)

        planes = {}
        for band in bands:
            rng = _stable_rng(self.seed, d.product_id, band)
            if band == "QA60":
                plane = np.zeros((n, n), dtype=np.float32)
                if cloud_px:
                    flat = plane.reshape(-1)
                    flat[total - cloud_px:] = float(1 << QA60_OPAQUE_CLOUD_BIT)
            else:
                # reflectance-like field well above the black threshold
                plane = rng.uniform(0.05, 1.0, size=(n, n)).astype(np.float32)
                if cloud_px:
                    flat = plane.reshape(-1)
                    flat[total - cloud_px:] = rng.uniform(
                        0.95, 1.0, size=cloud_px).astype(np.float32)
            if missing_px:
                plane.reshape(-1)[:missing_px] = np.nan
            planes[band] = plane
        return Raster(bands=planes, nodata=math.nan,
                      geo_transform=footprint_transform(fp))


# ---------------------------------------------------------------------------
# HTTP provider
# ---------------------------------------------------------------------------

COLLECTIONS = {Satellite.S1: "sentinel-1", Satellite.S2: "sentinel-2"}


class HttpCatalogProvider:
    """Client for a JSON search + GeoTIFF band-fetch catalog service."""

    def __init__(self, base_url: str, timeout_s: float = 30.0,
                 session: requests.Session | None = None):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s
        self.session = session or requests.Session()

    def search(self, q: ProductQuery) -> list[ProductDescriptor]:
        lat_min, lon_min, lat_max, lon_max = q.footprint.bbox
        body = {
            "bbox": [lat_min, lon_min, lat_max, lon_max],
            "datetime": f"{q.window[0].isoformat()}/{q.window[1].isoformat()}",
            "collection": COLLECTIONS[q.satellite],
            "limit": max(q.max_candidates * 4, 10),
        }
        try:
            resp = self.session.post(f"{self.base_url}/search", json=body,
                                     timeout=self.timeout_s)
        except requests.RequestException as e:
            raise ProviderUnavailable(f"search failed: {e}") from e
        if resp.status_code >= 500:
            raise ProviderUnavailable(f"search HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise MalformedResponse(f"search HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            items = resp.json()
            return [self._parse_descriptor(item) for item in items]
        except (ValueError, KeyError, TypeError) as e:
            raise MalformedResponse(f"bad search payload: {e}") from e

    @staticmethod
    def _parse_descriptor(item: dict) -> ProductDescriptor:
        return ProductDescriptor(
            product_id=str(item["product_id"]),
            satellite=Satellite(item["satellite"]),
            acquired_at=datetime.fromisoformat(item["acquired_at"]),
            available_bands=[str(b) for b in item["available_bands"]],
            cloud_pct_meta=item.get("cloud_pct_meta"),
        )

    def fetch_bands(self, d: ProductDescriptor, bands: list[str],
                    fp: SceneFootprint) -> Raster:
        lat_min, lon_min, lat_max, lon_max = fp.bbox
        params = {
            "bbox": f"{lat_min},{lon_min},{lat_max},{lon_max}",
            "size": fp.size_px,
        }
        planes = {}
        nodata = math.nan
        for band in bands:
            url = f"{self.base_url}/products/{d.product_id}/bands/{band}"
            try:
                resp = self.session.get(url, params=params, timeout=self.timeout_s)
            except requests.RequestException as e:
                raise ProviderUnavailable(f"fetch failed: {e}") from e
            if resp.status_code == 404:
                raise BandUnavailable(f"{d.product_id}/{band} not found")
            if resp.status_code >= 500:
                raise ProviderUnavailable(f"fetch HTTP {resp.status_code}")
            if resp.status_code != 200:
                raise MalformedResponse(f"fetch HTTP {resp.status_code}")
            declared = resp.headers.get("Content-Length")
            if declared is not None and len(resp.content) < int(declared):
                raise TruncatedPayload(
                    f"{url}: got {len(resp.content)} of {declared} bytes")
            try:
                band_raster = read_geotiff_bytes(resp.content)
            except Exception as e:
                raise TruncatedPayload(f"{url}: unreadable body: {e}") from e
            plane = next(iter(band_raster.bands.values()))
            if plane.shape != (fp.size_px, fp.size_px):
                raise TruncatedPayload(
                    f"{url}: got {plane.shape}, wanted {(fp.size_px, fp.size_px)}")
            planes[band] = plane
            nodata = band_raster.nodata
        return Raster(bands=planes, nodata=nodata,
                      geo_transform=footprint_transform(fp))


# ---------------------------------------------------------------------------
# plan execution
# ---------------------------------------------------------------------------

@dataclass
class TaskOutcome:
    scene_id: int
    satellite: Satellite
    month: str
    candidate_rank: int
    status: str                  # ok | empty | failed | skipped
    path: str | None = None
    product_id: str = ""
    acquired_at: str = ""
    attempts: int = 0
    error: str = ""


@dataclass
class DownloadReport:
    outcomes: list[TaskOutcome]

    def count(self, status: str) -> int:
        return sum(1 for o in self.outcomes if o.status == status)


class _RateLimitedProvider:
    """Caps concurrent in-flight provider calls with a semaphore."""

    def __init__(self, provider, limit: int):
        self._provider = provider
        self._sem = threading.Semaphore(limit)

    def search(self, q):
        with self._sem:
            return self._provider.search(q)

    def fetch_bands(self, d, bands, fp):
        with self._sem:
            return self._provider.fetch_bands(d, bands, fp)


def run_plan(plan: DownloadPlan, provider, root,
             policy: RetryPolicy | None = None,
             workers: int = 4) -> DownloadReport:
    """Execute the plan with bounded parallelism; resumable and non-fatal.

    Tasks whose target file already exists are skipped. Failures after
    retries are recorded per task, never raised.
    """
    policy = policy or RetryPolicy()
    root = Path(root)
    limited = _RateLimitedProvider(provider, policy.rate_limit)

    # one query per (scene, satellite, month); ranks fan out from it
    groups: dict[tuple, list[DownloadTask]] = {}
    for task in plan.tasks:
        groups.setdefault((task.scene_id, task.satellite, task.month), []).append(task)

    def run_group(key, tasks) -> list[TaskOutcome]:
        scene_id, sat, month = key
        outcomes = []
        paths = {t.candidate_rank: layout_path(root, sat, scene_id, month,
                                               t.candidate_rank, "raw")
                 for t in tasks}
        pending = [t for t in tasks if not paths[t.candidate_rank].exists()]
        for t in tasks:
            if t not in pending:
                outcomes.append(TaskOutcome(
                    scene_id, sat, month, t.candidate_rank, "skipped",
                    path=str(paths[t.candidate_rank].relative_to(root))))
        if not pending:
            return outcomes
        try:
            descs, _ = _with_retry(
                lambda: limited.search(pending[0].query), policy)
        except (ProviderUnavailable, MalformedResponse) as e:
            for t in pending:
                outcomes.append(TaskOutcome(scene_id, sat, month,
                                            t.candidate_rank, "failed",
                                            error=str(e)))
            return outcomes
        start, end = pending[0].query.window
        descs = [d for d in descs if start <= d.acquired_at < end]
        ranked = rank_candidates(descs, pending[0].query)
        for t in pending:
            if t.candidate_rank >= len(ranked):
                outcomes.append(TaskOutcome(scene_id, sat, month,
                                            t.candidate_rank, "empty"))
                continue
            d = ranked[t.candidate_rank]
            target = paths[t.candidate_rank]
            try:
                raster, attempts = _with_retry(
                    lambda d=d, t=t: limited.fetch_bands(
                        d, t.query.bands, t.query.footprint), policy)
            except (ProviderUnavailable, TruncatedPayload, BandUnavailable) as e:
                outcomes.append(TaskOutcome(
                    scene_id, sat, month, t.candidate_rank, "failed",
                    product_id=d.product_id, attempts=policy.max_attempts,
                    error=str(e)))
                continue
            target.parent.mkdir(parents=True, exist_ok=True)
            tmp = target.with_suffix(".tmp.tif")
            write_geotiff(raster, tmp)
            tmp.replace(target)
            outcomes.append(TaskOutcome(
                scene_id, sat, month, t.candidate_rank, "ok",
                path=str(target.relative_to(root)), product_id=d.product_id,
                acquired_at=d.acquired_at.isoformat(), attempts=attempts))
        return outcomes

    all_outcomes: list[TaskOutcome] = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_group, key, tasks)
                   for key, tasks in groups.items()]
        for fut in futures:
            all_outcomes.extend(fut.result())

    order = {(t.scene_id, t.satellite, t.month, t.candidate_rank): i
             for i, t in enumerate(plan.tasks)}
    all_outcomes.sort(key=lambda o: order[(o.scene_id, o.satellite,
                                           o.month, o.candidate_rank)])
    return DownloadReport(outcomes=all_outcomes)
