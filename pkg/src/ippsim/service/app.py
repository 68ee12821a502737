"""FastAPI application exposing the simulator, benchmark, and export API."""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from ..errors import ConfigurationError, IppError
from . import handlers, schemas


def create_app() -> FastAPI:
    app = FastAPI(title="ippsim", description="Adaptive terrain-monitoring planning service")

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return handlers.health()

    @app.post("/mission/run", response_model=schemas.MissionRunResponse)
    def run_mission(req: schemas.MissionRunRequest) -> schemas.MissionRunResponse:
        return _guard(handlers.run_mission_handler, req)

    @app.post("/benchmark/run", response_model=schemas.BenchmarkRunResponse)
    def run_benchmark(req: schemas.BenchmarkRunRequest) -> schemas.BenchmarkRunResponse:
        return _guard(handlers.run_benchmark_handler, req)

    @app.post("/render", response_model=schemas.RenderResponse)
    def render(req: schemas.RenderRequest) -> schemas.RenderResponse:
        return _guard(handlers.render_handler, req)

    @app.post("/state/export", response_model=schemas.StateExportResponse)
    def export_state(req: schemas.StateExportRequest) -> schemas.StateExportResponse:
        return _guard(handlers.export_state_handler, req)

    return app


def _guard(handler, req):
    try:
        return handler(req)
    except ConfigurationError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    except IppError as exc:
        raise HTTPException(status_code=500, detail=str(exc)) from exc


app = create_app()
