import numpy as np
import pytest

from eoforge.catalog import MockProvider, PlanConfig, RetryPolicy, Scenario
from eoforge.clean import Thresholds
from eoforge.geosample import SamplerConfig
from eoforge.patches import PatchGrid
from eoforge.pipeline import PipelineConfig
from eoforge.store import Satellite


def small_config(root, n_points=1, months=3, scene_px=32, seed=7,
                 candidates=3, satellites=None, **kw) -> PipelineConfig:
    """A fast pipeline config for end-to-end tests: tiny scenes, short series."""
    sats = satellites or [Satellite.S1, Satellite.S2]
    cfg = PipelineConfig(
        root=str(root),
        sampler=SamplerConfig(n_points=n_points, seed=seed,
                              scene_size_px=scene_px),
        plan=PlanConfig(start_month="2020-01", months=months, satellites=sats,
                        max_candidates=candidates, scene_size_px=scene_px),
        retry=RetryPolicy(backoff_initial_s=0.001),
        grid=PatchGrid(patch_px=max(scene_px // 4, 1)),
        thresholds=Thresholds(),
        **kw,
    )
    return cfg


@pytest.fixture
def mock_provider():
    return MockProvider(seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def scenario_provider(defects, seed=11):
    return MockProvider(seed=seed, scenario=Scenario(defects=defects))


def pytest_runtest_logreport(report):
    """One PASS/FAIL line per acceptance criterion."""
    if report.when == "call" and "test_acceptance" in report.nodeid:
        verdict = "PASS" if report.passed else "FAIL"
        name = report.nodeid.split("::")[-1]
        print(f"\nACCEPTANCE {verdict}: {name}", flush=True)
