"""Typed records for configuration, corpora, models and metrics.

Only the configuration schemas are re-exported here: the rest import numpy,
and settings must load before numpy does.
"""
from app.schemas.config import (
    ModelConfig,
    ModelSection,
    Preset,
    Reduction,
    RunConfig,
    TrainConfig,
)

__all__ = [
    "ModelConfig",
    "ModelSection",
    "Preset",
    "Reduction",
    "RunConfig",
    "TrainConfig",
]
