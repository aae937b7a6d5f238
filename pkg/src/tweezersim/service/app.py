"""FastAPI service wrapping the simulation runs.

Each POST /run/<command> takes a full RunConfig (validated with unknown keys
rejected, all fields defaulted) and returns every artifact inline, so the
service does not touch the filesystem and any number of clients can share
one instance.  Computational failures are reported in the response status,
not as transport errors.
"""

from __future__ import annotations

from fastapi import FastAPI, Query

from .. import __version__
from ..config import RunConfig
from ..runs import COMMANDS, RunOutcome
from .models import ArtifactModel, HealthResponse, RunResponse, TaskModel

__all__ = ["create_app"]


def _to_response(outcome: RunOutcome) -> RunResponse:
    return RunResponse(
        command=outcome.command,
        status=outcome.status,
        version=outcome.version,
        started_utc=outcome.started_utc,
        finished_utc=outcome.finished_utc,
        config=outcome.config_echo,
        tasks=[TaskModel(**t) for t in outcome.tasks],
        reports=outcome.reports,
        artifacts=[ArtifactModel.from_artifact(a) for a in outcome.artifacts],
    )


def create_app() -> FastAPI:
    app = FastAPI(
        title="tweezersim",
        version=__version__,
        description="Double-well two-atom collision gate simulator",
    )

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.get("/config/defaults")
    def defaults() -> dict:
        return RunConfig().canonical_dict()

    def _make_endpoint(command: str):
        runner = COMMANDS[command]

        def endpoint(
            config: RunConfig,
            workers: int | None = Query(default=None, ge=1),
        ) -> RunResponse:
            try:
                outcome = runner(config, workers=workers)
            except Exception as exc:
                from datetime import datetime, timezone

                now = datetime.now(timezone.utc).isoformat()
                return RunResponse(
                    command=command,
                    status="failed",
                    version=__version__,
                    started_utc=now,
                    finished_utc=now,
                    config=config.canonical_dict(),
                    tasks=[TaskModel(name=command, status="failed", error=str(exc))],
                    reports={},
                    artifacts=[],
                )
            return _to_response(outcome)

        endpoint.__name__ = f"run_{command}"
        return endpoint

    for command in COMMANDS:
        app.post(f"/run/{command}", response_model=RunResponse)(_make_endpoint(command))

    return app
