from typing import Literal, Optional

from pydantic import BaseModel, Field

from config import config


class EvaluationConfig(BaseModel):
    seed: int = 0
    repeats: int = Field(default=config.EVALUATION_REPEATS, gt=0)
    object_mode: Literal["optimize", "carry"] = "carry"
    diversity_pairs: int = Field(default=config.DIVERSITY_PAIRS, gt=0)
    multimodality_pairs: int = Field(default=config.MULTIMODALITY_PAIRS, gt=0)
    classifier_hidden: int = Field(default=config.CLASSIFIER_HIDDEN, gt=0)
    classifier_epochs: int = Field(default=100, gt=0)
    classifier_lr: float = Field(default=1e-3, gt=0)
    classifier_batch_size: int = Field(default=32, gt=0)
    val_subject: Optional[str] = None
    test_subject: Optional[str] = None
