"""Stateless JSON API for the planning dashboard.

Three endpoints wrap the library: one-epoch recommendations, scenario fan
summaries, and small capped simulation jobs running in background threads.
Requests carry their own seeds, so identical bodies produce identical
responses; the only server-side state is the in-memory job registry.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import replace

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from .config import (
    ConfigError,
    RECOMMEND_SCHEMA,
    RULE_SCHEMA,
    SNAPSHOT_SCHEMA,
    STUDY_SCHEMA,
    recommend_from_request,
    render_recommendation,
    study_from_json,
)
from .milp import DecodeError
from .simulator import run_study

MAX_REPLICATIONS = 50
MAX_SCENARIOS = 100


def create_app() -> FastAPI:
    app = FastAPI(title="wardplan", version="0.1.0")
    jobs: dict[str, dict] = {}
    jobs_lock = threading.Lock()

    async def _body_json(request: Request):
        try:
            return json.loads(await request.body())
        except json.JSONDecodeError as exc:
            raise _HttpError(400, f"malformed JSON: {exc}") from exc

    class _HttpError(Exception):
        def __init__(self, status: int, message: str):
            self.status = status
            self.message = message

    @app.exception_handler(_HttpError)
    async def _http_error(_request, exc: _HttpError):
        return JSONResponse(status_code=exc.status, content={"error": exc.message})

    @app.get("/api/schema")
    async def schema():
        return {
            "recommend": RECOMMEND_SCHEMA,
            "snapshot": SNAPSHOT_SCHEMA,
            "rule": RULE_SCHEMA,
            "study": STUDY_SCHEMA,
        }

    @app.post("/api/recommend")
    async def recommend(request: Request):
        doc = await _body_json(request)
        try:
            result = recommend_from_request(doc)
        except ConfigError as exc:
            raise _HttpError(400, str(exc)) from exc
        except (DecodeError, ValueError) as exc:
            raise _HttpError(422, str(exc)) from exc
        status = 504 if result["decision"]["approximate"] else 200
        return Response(
            content=render_recommendation(result),
            status_code=status,
            media_type="application/json",
        )

    @app.post("/api/scenarios")
    async def scenarios(request: Request):
        doc = await _body_json(request)
        try:
            result = recommend_from_request({"state": doc.get("state", doc), "rule": {"type": "IH"}})
        except ConfigError as exc:
            raise _HttpError(400, str(exc)) from exc
        except ValueError as exc:
            raise _HttpError(422, str(exc)) from exc
        return {"fan": result["fan"], "pmf": result["pmf"], "seed": result["seed"]}

    @app.post("/api/simulate")
    async def simulate(request: Request):
        doc = await _body_json(request)
        try:
            config = study_from_json(doc)
        except ConfigError as exc:
            raise _HttpError(400, str(exc)) from exc
        except ValueError as exc:
            raise _HttpError(422, str(exc)) from exc
        if config.replications > MAX_REPLICATIONS:
            raise _HttpError(422, f"replications capped at {MAX_REPLICATIONS} for service jobs")
        if config.scenarios_per_day > MAX_SCENARIOS:
            raise _HttpError(422, f"scenarios capped at {MAX_SCENARIOS} for service jobs")
        job_id = str(uuid.uuid4())
        with jobs_lock:
            jobs[job_id] = {"status": "running", "table": None, "error": None}

        def work():
            try:
                table = run_study(config)
                with jobs_lock:
                    jobs[job_id].update(status="done", table=table.to_json())
            except Exception as exc:  # pragma: no cover - defensive
                with jobs_lock:
                    jobs[job_id].update(status="failed", error=str(exc))

        threading.Thread(target=work, daemon=True).start()
        return {"job_id": job_id}

    @app.get("/api/simulate/{job_id}")
    async def simulate_status(job_id: str):
        with jobs_lock:
            job = jobs.get(job_id)
            if job is None:
                raise _HttpError(404, "unknown job id")
            return {"status": job["status"], "table": job["table"], "error": job["error"]}

    return app


app = create_app()
