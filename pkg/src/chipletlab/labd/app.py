"""HTTP/JSON surface of the interactive laboratory (versioned under /v1).

Commands are JSON POSTs applied in receipt order per session; acquisitions
return a job id with polled progress; sensor readings stream over SSE (or
can be polled with an index cursor). Map artifacts are delivered as binary
little-endian float32 grids with JSON metadata so viewers stay responsive.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor

from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import PlainTextResponse, Response, StreamingResponse
from pydantic import BaseModel

from ..floorplan import FloorplanConfigError, UnknownNodeError
from ..optics import OpticsError
from ..scenario import ScenarioError
from ..stimulus import AliasingError
from .core import CommandError, NotFound, SessionCore


class CreateSession(BaseModel):
    scenario: dict | None = None
    clock: str = "realtime"
    speed: float = 1.0


class LaserCommand(BaseModel):
    on: bool
    power_pct: float = 100.0
    lens: str = "71x"
    x_um: float | None = None
    y_um: float | None = None
    node: str | None = None


class BlockCommand(BaseModel):
    enabled: bool


class AdvanceCommand(BaseModel):
    dt_s: float


def create_app() -> FastAPI:
    app = FastAPI(title="chipletlab session service", version="1")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    sessions: dict[str, SessionCore] = {}
    executor = ThreadPoolExecutor(max_workers=4)

    def get_session(session_id: str) -> SessionCore:
        core = sessions.get(session_id)
        if core is None:
            raise HTTPException(404, f"unknown session {session_id}")
        return core

    @app.exception_handler(CommandError)
    async def command_error(request: Request, exc: CommandError):
        return PlainTextResponse(str(exc), status_code=422)

    for exc_type in (ScenarioError, FloorplanConfigError, OpticsError, AliasingError, ValueError):
        @app.exception_handler(exc_type)
        async def bad_request(request: Request, exc: Exception):
            return PlainTextResponse(str(exc), status_code=400)

    for exc_type in (NotFound, UnknownNodeError, KeyError):
        @app.exception_handler(exc_type)
        async def not_found(request: Request, exc: Exception):
            return PlainTextResponse(str(exc), status_code=404)

    @app.post("/v1/sessions")
    def create_session(cmd: CreateSession):
        core = SessionCore(cmd.scenario, clock=cmd.clock, speed=cmd.speed, executor=executor)
        sessions[core.session_id] = core
        return {"session_id": core.session_id, "seed": core.seed, "clock": core.clock_mode}

    @app.get("/v1/sessions/{sid}")
    def session_info(sid: str):
        core = get_session(sid)
        return {
            "session_id": core.session_id,
            "t": core.now(),
            "clock": core.clock_mode,
            "laser": core.laser_state(),
            "streams": sorted(core.streams),
            "jobs": {j.job_id: {"state": j.state, "progress": j.progress,
                                "artifact": j.artifact_id, "error": j.error}
                     for j in core.jobs.values()},
            "block_enables": dict(core.program.block_enables),
        }

    @app.delete("/v1/sessions/{sid}")
    def delete_session(sid: str):
        get_session(sid)
        del sessions[sid]
        return {"deleted": sid}

    @app.get("/v1/sessions/{sid}/floorplan")
    def floorplan(sid: str):
        return get_session(sid).floorplan_geometry()

    @app.post("/v1/sessions/{sid}/clock/advance")
    def advance(sid: str, cmd: AdvanceCommand):
        return {"t": get_session(sid).advance(cmd.dt_s)}

    @app.post("/v1/sessions/{sid}/blocks/{block_id}")
    def set_block(sid: str, block_id: str, cmd: BlockCommand):
        get_session(sid).set_block(block_id, cmd.enabled)
        return {"block_id": block_id, "enabled": cmd.enabled}

    @app.post("/v1/sessions/{sid}/laser")
    def set_laser(sid: str, cmd: LaserCommand):
        return get_session(sid).set_laser(
            on=cmd.on, power_pct=cmd.power_pct, lens=cmd.lens,
            x_um=cmd.x_um, y_um=cmd.y_um, node=cmd.node,
        )

    @app.post("/v1/sessions/{sid}/acquisitions")
    def acquire(sid: str, params: dict):
        job = get_session(sid).acquire(params)
        return {"job_id": job.job_id, "state": job.state, "artifact": job.artifact_id}

    @app.get("/v1/sessions/{sid}/jobs/{job_id}")
    def job_state(sid: str, job_id: str):
        core = get_session(sid)
        job = core.jobs.get(job_id)
        if job is None:
            raise HTTPException(404, f"unknown job {job_id}")
        return {"job_id": job.job_id, "kind": job.kind, "state": job.state,
                "progress": job.progress, "artifact": job.artifact_id, "error": job.error}

    @app.get("/v1/sessions/{sid}/artifacts/{artifact_id}")
    def artifact_meta(sid: str, artifact_id: str):
        return get_session(sid).artifact_meta(artifact_id)

    @app.get("/v1/sessions/{sid}/artifacts/{artifact_id}/data")
    def artifact_data(sid: str, artifact_id: str):
        grid = get_session(sid).artifact_grid(artifact_id)
        return Response(content=grid, media_type="application/octet-stream")

    @app.get("/v1/sessions/{sid}/artifacts/{artifact_id}/csv")
    def artifact_csv(sid: str, artifact_id: str):
        return PlainTextResponse(get_session(sid).artifact_csv(artifact_id))

    @app.post("/v1/sessions/{sid}/sensors")
    def start_sensor(sid: str, params: dict):
        return {"stream_id": get_session(sid).start_sensor(params)}

    @app.get("/v1/sessions/{sid}/sensors/{stream_id}/readings")
    def readings(sid: str, stream_id: str, start: int = 0):
        rows = get_session(sid).stream_rows(stream_id, start)
        return {"start": start, "rows": rows}

    @app.get("/v1/sessions/{sid}/sensors/{stream_id}/events")
    async def sensor_events(sid: str, stream_id: str, start: int = 0):
        core = get_session(sid)
        core.stream_rows(stream_id, 0)  # 404 for unknown streams

        def gen():
            cursor = start
            while True:
                try:
                    rows = core.stream_rows(stream_id, cursor)
                except (NotFound, KeyError):
                    break
                if rows:
                    cursor += len(rows)
                    yield f"data: {json.dumps({'rows': rows, 'next': cursor})}\n\n"
                jobs = {j.job_id: {"state": j.state, "progress": j.progress}
                        for j in core.jobs.values() if j.state in ("queued", "running")}
                if jobs:
                    yield f"event: jobs\ndata: {json.dumps(jobs)}\n\n"
                time.sleep(0.2)

        return StreamingResponse(gen(), media_type="text/event-stream")

    @app.get("/v1/sessions/{sid}/sensors/{stream_id}/csv")
    def stream_csv(sid: str, stream_id: str):
        from .. import artifacts

        series = get_session(sid).stream_series(stream_id)
        return PlainTextResponse(artifacts.series_csv_text(series))

    @app.post("/v1/sessions/{sid}/detect")
    def detect(sid: str, params: dict):
        return get_session(sid).detect(params)

    @app.post("/v1/sessions/{sid}/masking")
    def set_masking(sid: str, params: dict):
        get_session(sid).set_masking(params)
        return {"enabled": params.get("enabled")}

    @app.get("/v1/sessions/{sid}/log")
    def command_log(sid: str):
        core = get_session(sid)
        return {"doc": core.doc, "seed": core.seed, "t": core.now(), "log": core.command_log()}

    @app.get("/v1/sessions/{sid}/checkpoint")
    def checkpoint(sid: str):
        return get_session(sid).checkpoint()

    @app.post("/v1/sessions/restore")
    def restore(payload: dict):
        core = SessionCore.restore(payload, executor=executor)
        sessions[core.session_id] = core
        return {"session_id": core.session_id, "t": core.now()}

    return app
