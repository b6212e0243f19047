from typing import Any, Dict, List, Literal, Optional

import numpy as np
import torch
from pydantic import BaseModel, Field, field_validator, model_validator

from config import config

DTYPE = torch.float64


class MotionSequence(BaseModel):
    schema_version: str = config.SCHEMA_VERSION
    sequence_id: str
    subject_id: str
    action: str
    object_label: int = Field(ge=0, lt=config.OBJECT_COUNT)
    acting_hand: Literal["left", "right", "both"] = "right"
    receiving_hand: Optional[Literal["left", "right"]] = None
    shape: List[float] = Field(min_length=config.SHAPE_DIM, max_length=config.SHAPE_DIM)
    fps: float = Field(gt=0)
    theta: List[List[List[float]]]
    root_translation: List[List[float]]
    object_rotation: List[List[List[float]]]
    object_translation: List[List[float]]
    switch_frame: Optional[int] = None
    provenance: Optional[Dict[str, Any]] = None

    @field_validator("action")
    @classmethod
    def check_action(cls, action: str) -> str:
        if action in config.DISCARDED_INTENTS:
            raise ValueError(f"intent '{action}' is discarded")
        return action

    @model_validator(mode="after")
    def check_frames(self):
        frames = len(self.theta)
        if frames < 2:
            raise ValueError("a motion sequence needs at least 2 frames")
        for name in ("root_translation", "object_rotation", "object_translation"):
            if len(getattr(self, name)) != frames:
                raise ValueError(f"{name} has {len(getattr(self, name))} frames, theta has {frames}")

        theta = np.asarray(self.theta, dtype=np.float64)
        if theta.ndim != 3 or theta.shape[2] != 6:
            raise ValueError(f"theta must be frames x joints x 6, got {theta.shape}")
        if np.asarray(self.root_translation).shape != (frames, 3):
            raise ValueError("root_translation must be frames x 3")
        if np.asarray(self.object_translation).shape != (frames, 3):
            raise ValueError("object_translation must be frames x 3")
        rotation = np.asarray(self.object_rotation, dtype=np.float64)
        if rotation.shape != (frames, 3, 3):
            raise ValueError("object_rotation must be frames x 3 x 3")
        gram = np.einsum("fji,fjk->fik", rotation, rotation)
        if np.abs(gram - np.eye(3)).max() > 1e-6 or np.abs(np.linalg.det(rotation) - 1.0).max() > 1e-6:
            raise ValueError("object_rotation frames must be proper rotations")
        if not np.isfinite(theta).all():
            raise ValueError("theta must be finite")
        if self.switch_frame is not None and not 0 <= self.switch_frame < frames:
            raise ValueError(f"switch_frame {self.switch_frame} outside [0, {frames})")
        return self

    @property
    def frame_count(self) -> int:
        return len(self.theta)

    def theta_tensor(self) -> torch.Tensor:
        return torch.tensor(self.theta, dtype=DTYPE)

    def root_tensor(self) -> torch.Tensor:
        return torch.tensor(self.root_translation, dtype=DTYPE)

    def object_rotation_tensor(self) -> torch.Tensor:
        return torch.tensor(self.object_rotation, dtype=DTYPE)

    def object_translation_tensor(self) -> torch.Tensor:
        return torch.tensor(self.object_translation, dtype=DTYPE)

    def shape_tensor(self) -> torch.Tensor:
        return torch.tensor(self.shape, dtype=DTYPE)

    def with_tensors(self, **tensors: torch.Tensor) -> "MotionSequence":
        """Copy with the given array fields replaced by tensor contents."""
        updates = {name: value.detach().cpu().tolist() for name, value in tensors.items() if isinstance(value, torch.Tensor)}
        updates.update({name: value for name, value in tensors.items() if not isinstance(value, torch.Tensor)})
        return MotionSequence.model_validate({**self.model_dump(), **updates})
