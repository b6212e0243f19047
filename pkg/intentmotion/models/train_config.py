import hashlib
import json
from typing import Optional

from pydantic import BaseModel, Field

from intentmotion.models.generator_config import GeneratorConfig

FULL_EPOCHS = 1600


class TrainConfig(BaseModel):
    epochs: int = Field(default=200, gt=0)
    batch_size: int = Field(default=64, gt=0)
    base_lr: float = Field(default=5e-4, gt=0)
    lambda_kl: float = Field(default=0.001, ge=0)
    lambda_p: float = Field(default=1.0, gt=0)
    scheduler_patience: int = Field(default=3, gt=0)
    scheduler_decay: float = Field(default=0.999, gt=0, le=1.0)
    seed: int = 0
    val_subject: str = "S1"
    test_subject: Optional[str] = None
    generator: GeneratorConfig = Field(default_factory=GeneratorConfig)

    @classmethod
    def full_preset(cls, **overrides) -> "TrainConfig":
        return cls(**{"epochs": FULL_EPOCHS, **overrides})


def config_hash(model: BaseModel) -> str:
    canonical = json.dumps(model.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
