from typing import Dict, List, Optional

from pydantic import BaseModel

from config import config


class MetricSummary(BaseModel):
    mean: float
    ci: float
    values: List[float]


class MetricsReport(BaseModel):
    schema_version: str = config.SCHEMA_VERSION
    seed: int
    repeats: int
    object_mode: str
    checkpoint: Optional[str] = None
    config_hash: Optional[str] = None
    dataset_hash: str
    test_sequences: int
    pair_counts: Dict[str, int]
    metrics: Dict[str, MetricSummary]
