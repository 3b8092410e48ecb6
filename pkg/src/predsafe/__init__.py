"""Stratified evaluation harness for trajectory-prediction models."""

__version__ = "0.1.0"

from .scene_model import (  # noqa: F401
    AgentTrack,
    DensityLevel,
    GeometryType,
    Lane,
    MetricRecord,
    PredictionSet,
    Scene,
    SemanticCondition,
    SemanticMap,
    StratumKey,
    StratumReport,
    TrajPoint,
    Violation,
    validate_scene,
)
