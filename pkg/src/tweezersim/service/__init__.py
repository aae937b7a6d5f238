from .app import create_app
from .models import ArtifactModel, HealthResponse, RunResponse, TaskModel

__all__ = ["create_app", "ArtifactModel", "HealthResponse", "RunResponse", "TaskModel"]
