from typing import List

from pydantic import BaseModel, Field, field_validator, model_validator

from config import config


class ObjectModel(BaseModel):
    schema_version: str = config.SCHEMA_VERSION
    label_index: int = Field(ge=0, lt=config.OBJECT_COUNT)
    name: str
    kind: str
    size: float = Field(gt=0)
    vertices: List[List[float]]

    @field_validator("vertices")
    @classmethod
    def check_vertices(cls, vertices: List[List[float]]) -> List[List[float]]:
        if not 4 <= len(vertices) <= config.MAX_OBJECT_VERTICES:
            raise ValueError(f"object needs 4..{config.MAX_OBJECT_VERTICES} vertices, got {len(vertices)}")
        if any(len(vertex) != 3 for vertex in vertices):
            raise ValueError("vertices must be 3-vectors")
        return vertices

    @model_validator(mode="after")
    def check_centered(self):
        count = len(self.vertices)
        for axis in range(3):
            mean = sum(vertex[axis] for vertex in self.vertices) / count
            if abs(mean) > 1e-9:
                raise ValueError(f"canonical vertices must be centered, axis {axis} mean is {mean:.3e}")
        return self
