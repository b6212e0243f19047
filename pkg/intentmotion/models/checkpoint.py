from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field

from config import config
from intentmotion.models.action_vocabulary import ActionVocabulary
from intentmotion.models.skeleton_template import SkeletonTemplate
from intentmotion.models.train_config import TrainConfig


class ArrayDocument(BaseModel):
    shape: List[int]
    dtype: Literal["float64", "float32", "int64"]
    data: str


class OptimizerState(BaseModel):
    param_groups: List[Dict[str, Any]]
    state: Dict[str, Dict[str, ArrayDocument]]


class SchedulerState(BaseModel):
    lr: float
    patience: int
    decay: float
    best: Optional[float] = None
    wait: int = 0
    decays: int = 0


class Checkpoint(BaseModel):
    schema_version: str = config.SCHEMA_VERSION
    kind: Literal["initial", "best", "final"]
    epoch: int = Field(ge=0)
    synthesizer: str
    config: TrainConfig
    config_hash: str
    val_loss: Optional[float] = None
    skeleton: SkeletonTemplate
    vocabulary: ActionVocabulary
    parameters: Dict[str, ArrayDocument]
    optimizer: Optional[OptimizerState] = None
    scheduler: Optional[SchedulerState] = None
