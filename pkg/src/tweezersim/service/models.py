"""Pydantic request/response models for the simulation service."""

from __future__ import annotations

import base64
from typing import Optional

from pydantic import BaseModel, ConfigDict

from ..serialize import Artifact

__all__ = ["TaskModel", "ArtifactModel", "RunResponse", "HealthResponse"]


class TaskModel(BaseModel):
    name: str
    status: str
    error: Optional[str] = None


class ArtifactModel(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    name: str
    kind: str  # "csv" | "json" | "f64"
    sha256: str
    text: Optional[str] = None  # set for csv/json payloads
    base64: Optional[str] = None  # set for binary payloads

    @classmethod
    def from_artifact(cls, art: Artifact) -> "ArtifactModel":
        if art.kind in ("csv", "json"):
            return cls(name=art.name, kind=art.kind, sha256=art.sha256, text=art.text)
        return cls(
            name=art.name,
            kind=art.kind,
            sha256=art.sha256,
            base64=base64.b64encode(art.data).decode("ascii"),
        )

    def payload(self) -> bytes:
        if self.text is not None:
            return self.text.encode("utf-8")
        if self.base64 is not None:
            return base64.b64decode(self.base64)
        return b""


class RunResponse(BaseModel):
    command: str
    status: str  # "ok" | "partial" | "failed"
    version: str
    started_utc: str
    finished_utc: str
    config: dict
    tasks: list[TaskModel]
    reports: dict
    artifacts: list[ArtifactModel]


class HealthResponse(BaseModel):
    status: str
    version: str
