"""Request/response models for the service endpoints."""
from __future__ import annotations

from pydantic import BaseModel

from ..config import DatasetSource, EvalSettings, RunConfig, SweepSpec
from ..mining import Strategy


class HealthResponse(BaseModel):
    status: str = "ok"
    version: str


class MineRequest(BaseModel):
    """Inline features + labels to mine; one label per feature row."""

    features: list[list[float]]
    labels: list[str]
    strategy: Strategy = Strategy.ALL
    margin: float = 0.2
    seed: int = 0
    normalize: bool = True


class MineResponse(BaseModel):
    triplets: list[list[int]]  # rows of (anchor, positive, negative)
    count: int


class RunRequest(BaseModel):
    config: RunConfig


class RunSummaryResponse(BaseModel):
    metrics: dict
    artifacts: dict[str, str]
    config: RunConfig


class EvalRequest(BaseModel):
    checkpoint: str
    dataset: DatasetSource
    eval: EvalSettings = EvalSettings()
    seed: int = 0


class EvalResponse(BaseModel):
    accuracy: float
    pairs: int


class BenchRequest(BaseModel):
    config: RunConfig
    sweep: SweepSpec


class BenchResponse(BaseModel):
    rows: list[dict]
    csv_path: str
