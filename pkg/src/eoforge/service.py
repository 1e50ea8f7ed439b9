"""HTTP API for the pipeline: job queue, config, map data and review queue.

One pipeline job executes at a time; submissions queue FIFO. API reads are
served concurrently and never block on a running job.
"""

from __future__ import annotations

import itertools
import logging
import queue
import threading
from dataclasses import dataclass, field

from fastapi import Body, FastAPI, HTTPException
from fastapi.responses import FileResponse
from pathlib import Path

from . import clean, pipeline
from .errors import AlreadyResolved, ConfigError, UnknownItem
from .pipeline import PipelineConfig, run_stage
from .store import STAGES, Satellite, StageStatus, export_points_geojson, load_manifest

log = logging.getLogger(__name__)

LOG_TAIL_LINES = 50


@dataclass
class Job:
    id: int
    stage: str                      # one stage name or "all"
    overrides: dict[str, object] = field(default_factory=dict)
    state: str = "queued"           # queued | running | done | failed
    progress: dict[str, dict] = field(default_factory=dict)
    log_tail: list[str] = field(default_factory=list)
    error: str = ""
    failed_stage: str = ""

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "stage": self.stage,
            "state": self.state,
            "progress": self.progress,
            "log_tail": self.log_tail[-LOG_TAIL_LINES:],
            "error": self.error,
            "failed_stage": self.failed_stage,
        }


class JobManager:
    """Single-worker FIFO job executor."""

    def __init__(self, get_config, provider=None):
        self._get_config = get_config
        self._provider = provider
        self._queue: queue.Queue[Job] = queue.Queue()
        self._jobs: dict[int, Job] = {}
        self._ids = itertools.count(1)
        self._lock = threading.Lock()
        self._worker = threading.Thread(target=self._run, daemon=True)
        self._worker.start()

    def submit(self, stage: str, overrides: dict | None = None) -> Job:
        if stage != "all" and stage not in STAGES:
            raise ConfigError(f"unknown stage {stage!r}")
        with self._lock:
            job = Job(id=next(self._ids), stage=stage, overrides=overrides or {})
            self._jobs[job.id] = job
        self._queue.put(job)
        return job

    def get(self, job_id: int) -> Job:
        with self._lock:
            return self._jobs[job_id]

    def list(self) -> list[Job]:
        with self._lock:
            return list(self._jobs.values())

    def _run(self) -> None:
        while True:
            job = self._queue.get()
            self._execute(job)

    def _execute(self, job: Job) -> None:
        job.state = "running"
        current_stage = job.stage

        def progress(stage: str, done: int, total: int) -> None:
            job.progress[stage] = {"done": done, "total": total}

        try:
            cfg = self._get_config()
            if job.overrides:
                cfg = PipelineConfig.from_dict(
                    pipeline.apply_overrides(cfg.to_dict(), job.overrides))
            if job.stage == "all":
                for stage in STAGES:
                    current_stage = stage
                    if pipeline.stage_status(cfg.root)[stage] is StageStatus.DONE:
                        job.log_tail.append(f"{stage}: skipped (already done)")
                        job.progress.setdefault(stage, {"done": 1, "total": 1})
                        continue
                    job.log_tail.append(f"{stage}: running")
                    run_stage(stage, cfg, provider=self._provider,
                              progress=progress)
                    job.log_tail.append(f"{stage}: done")
            else:
                job.log_tail.append(f"{job.stage}: running")
                run_stage(job.stage, cfg, provider=self._provider,
                          progress=progress)
                job.log_tail.append(f"{job.stage}: done")
            job.state = "done"
        except Exception as e:
            log.exception("job %s failed", job.id)
            job.state = "failed"
            job.failed_stage = current_stage
            job.error = str(e)
            job.log_tail.append(f"{current_stage}: failed: {e}")


def create_app(cfg: PipelineConfig, provider=None,
               static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="eoforge")
    state = {"config": cfg}
    manager = JobManager(lambda: state["config"], provider=provider)
    app.state.jobs = manager

    def root() -> Path:
        return Path(state["config"].root)

    def manifest_or_404():
        try:
            return load_manifest(root())
        except FileNotFoundError:
            raise HTTPException(404, "no manifest yet; run generate first")

    @app.post("/api/jobs")
    def submit_job(body: dict = Body(...)):
        stage = body.get("stage", "all")
        overrides = body.get("overrides", {})
        try:
            job = manager.submit(stage, overrides)
        except ConfigError as e:
            raise HTTPException(400, str(e))
        return {"job_id": job.id}

    @app.get("/api/jobs")
    def list_jobs():
        return [j.to_dict() for j in manager.list()]

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: int):
        try:
            return manager.get(job_id).to_dict()
        except KeyError:
            raise HTTPException(404, f"no job {job_id}")

    @app.get("/api/config")
    def get_config():
        return state["config"].to_dict()

    @app.put("/api/config")
    def put_config(body: dict = Body(...)):
        try:
            state["config"] = PipelineConfig.from_dict(body)
        except ConfigError as e:
            raise HTTPException(400, str(e))
        return state["config"].to_dict()

    @app.get("/api/points.geojson")
    def points_geojson():
        return export_points_geojson(manifest_or_404())

    @app.get("/api/stages")
    def stages():
        return {k: v.value for k, v in pipeline.stage_status(root()).items()}

    @app.get("/api/scenes")
    def scenes():
        m = manifest_or_404()
        return [{
            "scene_id": r.scene_id,
            "center": {"lat": r.center.lat, "lon": r.center.lon},
            "months": [mo.month for mo in r.months],
        } for r in m.regions]

    @app.get("/api/scenes/{scene_id}")
    def scene_detail(scene_id: int):
        m = manifest_or_404()
        try:
            region = m.region(scene_id)
        except KeyError:
            raise HTTPException(404, f"no scene {scene_id}")
        return region.to_dict()

    @app.get("/api/scenes/{scene_id}/preview.png")
    def scene_preview(scene_id: int, satellite: str = "S2"):
        try:
            sat = Satellite(satellite.upper())
        except ValueError:
            raise HTTPException(400, f"bad satellite {satellite!r}")
        path = pipeline.preview_path(root(), scene_id, sat)
        if not path.exists():
            raise HTTPException(404, "preview not built")
        return FileResponse(path, media_type="image/png")

    @app.get("/api/review/pending")
    def review_pending():
        manifest_or_404()
        return [vars(item) for item in clean.list_pending(root())]

    @app.post("/api/review/{item_id}")
    def review_resolve(item_id: str, body: dict = Body(...)):
        decision = str(body.get("decision", "")).lower()
        try:
            clean.resolve_review(root(), item_id, decision)
        except UnknownItem:
            raise HTTPException(404, f"no review item {item_id}")
        except AlreadyResolved:
            raise HTTPException(409, f"item {item_id} already resolved")
        except ValueError as e:
            raise HTTPException(400, str(e))
        return {"item_id": item_id, "decision": decision}

    @app.get("/api/files/{file_path:path}")
    def get_file(file_path: str):
        base = root().resolve()
        target = (base / file_path).resolve()
        if not target.is_relative_to(base):
            raise HTTPException(403, "path escapes the dataset root")
        if not target.is_file():
            raise HTTPException(404, f"no file {file_path}")
        return FileResponse(target)

    if static_dir and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app


def serve(cfg: PipelineConfig, host: str = "127.0.0.1", port: int = 8000,
          static_dir: str | None = None) -> None:
    import uvicorn
    app = create_app(cfg, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port)
