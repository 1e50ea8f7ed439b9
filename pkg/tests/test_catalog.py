import json
import threading
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import numpy as np
import pytest

from eoforge.catalog import (DEFAULT_BANDS, Defect, HttpCatalogProvider,
                             MockProvider, PlanConfig, ProductQuery,
                             RetryPolicy, fetch, month_window, plan_downloads,
                             query, run_plan)
from eoforge.errors import (BandUnavailable, EmptyDateRange,
                            ProviderUnavailable)
from eoforge.geosample import GeoPoint, footprint_of
from eoforge.raster import geotiff_bytes
from eoforge.store import Satellite, parse_layout_path
from conftest import scenario_provider

POINT = GeoPoint(42.0, 12.5)


def fp(size=32):
    return footprint_of(POINT, size, 10.0)


def s2_query(month="2020-03", size=32, max_candidates=3):
    return ProductQuery(footprint=fp(size), satellite=Satellite.S2,
                        window=month_window(month),
                        bands=list(DEFAULT_BANDS[Satellite.S2]),
                        max_candidates=max_candidates)


class TestPlan:
    def test_default_arithmetic(self):
        cfg = PlanConfig(start_month="2020-01", scene_size_px=32)
        plan = plan_downloads([POINT], cfg)
        assert len(plan.tasks) == 1 * 12 * 2 * 3  # scenes x months x sats x cands

    def test_zero_months(self):
        cfg = PlanConfig(start_month="2020-01", months=0)
        with pytest.raises(EmptyDateRange):
            plan_downloads([POINT], cfg)

    def test_default_bands(self):
        cfg = PlanConfig(start_month="2020-01", scene_size_px=32)
        plan = plan_downloads([POINT], cfg)
        by_sat = {t.satellite: t.query.bands for t in plan.tasks}
        assert by_sat[Satellite.S2] == ["B4", "B3", "B2", "QA60"]
        assert by_sat[Satellite.S1] == ["VV"]

    def test_determinism(self):
        cfg = PlanConfig(start_month="2020-01", months=4, scene_size_px=32)
        points = [POINT, GeoPoint(-10, 44)]
        a = plan_downloads(points, cfg)
        b = plan_downloads(points, cfg)
        assert a.tasks == b.tasks
        assert a.months == ["2020-01", "2020-02", "2020-03", "2020-04"]


class TestQuery:
    def test_ranked_truncation(self, mock_provider):
        # oracle: brute-force sort of what the provider returns
        q = s2_query(max_candidates=2)
        raw = mock_provider.search(q)
        assert len(raw) == 3
        mid = q.window[0] + (q.window[1] - q.window[0]) / 2
        expected = sorted(raw, key=lambda d: (d.cloud_pct_meta,
                                              abs((d.acquired_at - mid).total_seconds())))
        assert query(mock_provider, q) == expected[:2]

    def test_empty_month(self):
        provider = scenario_provider([Defect(month="2020-03", absent=True)])
        assert query(provider, s2_query()) == []

    def test_s2_cloud_meta_ordering(self):
        provider = scenario_provider([
            Defect(rank=0, cloud_pct_meta=40.0),
            Defect(rank=1, cloud_pct_meta=5.0),
            Defect(rank=2, cloud_pct_meta=20.0),
        ])
        descs = query(provider, s2_query())
        assert [d.cloud_pct_meta for d in descs] == [5.0, 20.0, 40.0]


class TestFetch:
    def test_deterministic_bytes(self, mock_provider):
        q = s2_query()
        d = query(mock_provider, q)[0]
        a = fetch(mock_provider, d, q.bands, q.footprint)
        b = fetch(mock_provider, d, q.bands, q.footprint)
        assert geotiff_bytes(a) == geotiff_bytes(b)

    def test_band_unavailable(self, mock_provider):
        q = s2_query()
        d = query(mock_provider, q)[0]
        with pytest.raises(BandUnavailable):
            fetch(mock_provider, d, ["B7"], q.footprint)

    def test_footprint_size(self, mock_provider):
        q = s2_query(size=1000)
        d = query(mock_provider, q)[0]
        r = fetch(mock_provider, d, ["B4"], q.footprint)
        assert (r.height, r.width) == (1000, 1000)

    def test_injected_cloud_fraction_pixel_count(self):
        # pixel-count oracle directly on the QA60 plane
        provider = scenario_provider([Defect(cloud_fraction=0.9)])
        q = s2_query(size=100)
        d = query(provider, q)[0]
        r = fetch(provider, d, ["QA60"], q.footprint)
        qa = np.nan_to_num(r.bands["QA60"]).astype(np.int64)
        frac = ((qa & (1 << 10)) != 0).mean()
        assert frac == pytest.approx(0.9, abs=0.02)

    def test_injected_missing_fraction_pixel_count(self):
        provider = scenario_provider([Defect(missing_fraction=0.25)])
        q = s2_query(size=100)
        d = query(provider, q)[0]
        r = fetch(provider, d, ["B4"], q.footprint)
        assert np.isnan(r.bands["B4"]).mean() == pytest.approx(0.25, abs=1e-9)


class FlakyProvider:
    """Fails the first n transport attempts of each call, then delegates."""

    def __init__(self, inner, fail_times):
        self.inner = inner
        self.fail_times = fail_times
        self.counts = {}

    def _maybe_fail(self, key):
        n = self.counts.get(key, 0)
        self.counts[key] = n + 1
        if n < self.fail_times:
            raise ProviderUnavailable("scripted failure")

    def search(self, q):
        self._maybe_fail(("search", q.satellite, q.window[0]))
        return self.inner.search(q)

    def fetch_bands(self, d, bands, fp):
        self._maybe_fail(("fetch", d.product_id))
        return self.inner.fetch_bands(d, bands, fp)


def tiny_plan(months=1, candidates=3, size=16):
    cfg = PlanConfig(start_month="2020-01", months=months,
                     max_candidates=candidates, scene_size_px=size)
    return plan_downloads([POINT], cfg)


class TestRunPlan:
    def test_dense_catalog_all_ok(self, tmp_path, mock_provider):
        plan = tiny_plan(months=2)
        report = run_plan(plan, mock_provider, tmp_path,
                          policy=RetryPolicy(backoff_initial_s=0.001))
        assert report.count("ok") == len(plan.tasks) == 12
        for outcome in report.outcomes:
            path = tmp_path / outcome.path
            assert path.exists()
            sat, scene, month, rank, kind = parse_layout_path(path)
            assert (sat, scene, month, rank, kind) == (
                outcome.satellite, 0, outcome.month, outcome.candidate_rank, "raw")

    def test_retry_then_success_records_attempts(self, tmp_path, mock_provider):
        flaky = FlakyProvider(mock_provider, fail_times=2)
        plan = tiny_plan(candidates=1)
        report = run_plan(plan, flaky, tmp_path,
                          policy=RetryPolicy(max_attempts=4,
                                             backoff_initial_s=0.001))
        assert report.count("ok") == 2
        assert all(o.attempts == 3 for o in report.outcomes if o.status == "ok")

    def test_failure_after_retries_is_recorded(self, tmp_path, mock_provider):
        flaky = FlakyProvider(mock_provider, fail_times=99)
        plan = tiny_plan(candidates=1)
        report = run_plan(plan, flaky, tmp_path,
                          policy=RetryPolicy(max_attempts=2,
                                             backoff_initial_s=0.001))
        assert report.count("failed") == 2

    def test_rerun_skips_everything(self, tmp_path, mock_provider):
        plan = tiny_plan()
        run_plan(plan, mock_provider, tmp_path,
                 policy=RetryPolicy(backoff_initial_s=0.001))
        before = {p: p.read_bytes() for p in tmp_path.rglob("*.tif")}
        report = run_plan(plan, mock_provider, tmp_path,
                          policy=RetryPolicy(backoff_initial_s=0.001))
        assert report.count("skipped") == len(plan.tasks)
        after = {p: p.read_bytes() for p in tmp_path.rglob("*.tif")}
        assert before == after

    def test_sparse_month_yields_empty(self, tmp_path):
        provider = scenario_provider([Defect(satellite=Satellite.S2,
                                             rank=2, absent=True)])
        plan = tiny_plan()
        report = run_plan(plan, provider, tmp_path,
                          policy=RetryPolicy(backoff_initial_s=0.001))
        assert report.count("empty") == 1
        assert report.count("ok") == 5

    def test_rate_limit_respected(self, tmp_path, mock_provider):
        plan = tiny_plan(months=4)
        policy = RetryPolicy(rate_limit=2, backoff_initial_s=0.001)
        run_plan(plan, mock_provider, tmp_path, policy=policy, workers=8)
        assert mock_provider.max_in_flight <= 2


# ---------------------------------------------------------------------------
# HTTP provider against a real local server backed by the mock catalog
# ---------------------------------------------------------------------------

class _CatalogHandler(BaseHTTPRequestHandler):
    backend: MockProvider = None
    fail_next = 0

    def log_message(self, *args):
        pass

    def _send(self, code, body, content_type="application/json"):
        self.send_response(code)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self):
        if type(self).fail_next > 0:
            type(self).fail_next -= 1
            self._send(503, b"{}")
            return
        length = int(self.headers["Content-Length"])
        req = json.loads(self.rfile.read(length))
        lat_min, lon_min, lat_max, lon_max = req["bbox"]
        start_s, end_s = req["datetime"].split("/")
        start = datetime.fromisoformat(start_s)
        sat = Satellite.S1 if req["collection"] == "sentinel-1" else Satellite.S2
        size = self._size_from_bbox(lat_min, lat_max)
        q = ProductQuery(
            footprint=footprint_of(GeoPoint((lat_min + lat_max) / 2,
                                            (lon_min + lon_max) / 2), size, 10.0),
            satellite=sat,
            window=(start, datetime.fromisoformat(end_s)),
            bands=DEFAULT_BANDS[sat])
        descs = self.backend.search(q)
        payload = json.dumps([{
            "product_id": d.product_id,
            "satellite": d.satellite.value,
            "acquired_at": d.acquired_at.isoformat(),
            "available_bands": d.available_bands,
            "cloud_pct_meta": d.cloud_pct_meta,
        } for d in descs]).encode()
        self._send(200, payload)

    @staticmethod
    def _size_from_bbox(lat_min, lat_max):
        meters = (lat_max - lat_min) * 111_320.0
        return max(round(meters / 10.0), 1)

    def do_GET(self):
        parsed = urlparse(self.path)
        parts = parsed.path.strip("/").split("/")
        if len(parts) != 4 or parts[0] != "products" or parts[2] != "bands":
            self._send(404, b"not found", "text/plain")
            return
        product_id, band = parts[1], parts[3]
        params = parse_qs(parsed.query)
        size = int(params["size"][0])
        lat_min, lon_min, lat_max, lon_max = map(float, params["bbox"][0].split(","))
        footprint = footprint_of(
            GeoPoint((lat_min + lat_max) / 2, (lon_min + lon_max) / 2), size, 10.0)
        sat = Satellite(product_id.split("-")[0])
        bands = (["B2", "B3", "B4", "B8", "QA60"] if sat is Satellite.S2
                 else ["VV", "VH"])
        if band not in bands:
            self._send(404, b"no such band", "text/plain")
            return
        from eoforge.catalog import ProductDescriptor
        d = ProductDescriptor(product_id=product_id, satellite=sat,
                              acquired_at=datetime.now(timezone.utc),
                              available_bands=bands)
        raster = self.backend.fetch_bands(d, [band], footprint)
        self._send(200, geotiff_bytes(raster), "image/tiff")


@pytest.fixture
def catalog_server(mock_provider):
    handler = type("Handler", (_CatalogHandler,), {"backend": mock_provider})
    server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}", handler
    server.shutdown()


class TestHttpProvider:
    def test_search_matches_mock(self, catalog_server, mock_provider):
        url, _ = catalog_server
        http = HttpCatalogProvider(url)
        q = s2_query()
        got = {d.product_id for d in http.search(q)}
        want = {d.product_id for d in mock_provider.search(q)}
        assert got == want

    def test_fetch_matches_mock(self, catalog_server, mock_provider):
        url, _ = catalog_server
        http = HttpCatalogProvider(url)
        q = s2_query(size=16)
        d = query(http, q)[0]
        got = fetch(http, d, ["B4", "QA60"], q.footprint)
        want = mock_provider.fetch_bands(d, ["B4", "QA60"], q.footprint)
        for band in ("B4", "QA60"):
            g, w = got.bands[band], want.bands[band]
            assert ((g == w) | (np.isnan(g) & np.isnan(w))).all()

    def test_band_404(self, catalog_server):
        url, _ = catalog_server
        http = HttpCatalogProvider(url)
        q = s2_query(size=16)
        d = query(http, q)[0]
        d = type(d)(product_id=d.product_id, satellite=d.satellite,
                    acquired_at=d.acquired_at,
                    available_bands=d.available_bands + ["FAKE"],
                    cloud_pct_meta=d.cloud_pct_meta)
        with pytest.raises(BandUnavailable):
            fetch(http, d, ["FAKE"], q.footprint,
                  policy=RetryPolicy(max_attempts=1))

    def test_retry_recovers_from_503(self, catalog_server):
        url, handler = catalog_server
        handler.fail_next = 2
        http = HttpCatalogProvider(url)
        descs = query(http, s2_query(),
                      policy=RetryPolicy(max_attempts=4, backoff_initial_s=0.001))
        assert len(descs) == 3

    def test_unreachable_host(self):
        http = HttpCatalogProvider("http://127.0.0.1:1", timeout_s=0.2)
        with pytest.raises(ProviderUnavailable):
            query(http, s2_query(),
                  policy=RetryPolicy(max_attempts=2, backoff_initial_s=0.001))
