"""Procedural object library and rigid object placement helpers."""
import logging
from typing import Dict, List, Optional

import numpy as np
import torch

from config import config
from intentmotion.kinematics.rotations import DTYPE
from intentmotion.models.object_model import ObjectModel

logger = logging.getLogger(__name__)

OBJECT_KINDS = ("box", "cylinder", "sphere")
DENSE_SAMPLES = 4000


def _sample_box(rng: np.random.Generator, size: float, count: int) -> np.ndarray:
    half = np.array([size, 0.8 * size, 0.6 * size]) / 2.0
    areas = np.array([half[1] * half[2], half[0] * half[2], half[0] * half[1]])
    axes = rng.choice(3, size=count, p=areas / areas.sum())
    points = rng.uniform(-1.0, 1.0, size=(count, 3))
    signs = rng.choice([-1.0, 1.0], size=count)
    points[np.arange(count), axes] = signs
    return points * half


def _sample_cylinder(rng: np.random.Generator, size: float, count: int) -> np.ndarray:
    radius, height = 0.3 * size, size
    side_area = 2.0 * np.pi * radius * height
    cap_area = 2.0 * np.pi * radius ** 2
    on_side = rng.uniform(size=count) < side_area / (side_area + cap_area)
    angle = rng.uniform(0.0, 2.0 * np.pi, size=count)
    r = np.where(on_side, radius, radius * np.sqrt(rng.uniform(size=count)))
    y = np.where(on_side, rng.uniform(-height / 2.0, height / 2.0, size=count), rng.choice([-height / 2.0, height / 2.0], size=count))
    return np.stack([r * np.cos(angle), y, r * np.sin(angle)], axis=1)


def _sample_sphere(rng: np.random.Generator, size: float, count: int) -> np.ndarray:
    directions = rng.normal(size=(count, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return directions * (size / 2.0)


SAMPLERS = {"box": _sample_box, "cylinder": _sample_cylinder, "sphere": _sample_sphere}


def thin_points(points: np.ndarray, spacing: float, cap: int) -> np.ndarray:
    """Greedy minimum-spacing subsample, capped at `cap` points."""
    kept = [points[0]]
    for point in points[1:]:
        if len(kept) >= cap:
            break
        if np.min(np.linalg.norm(np.asarray(kept) - point, axis=1)) >= spacing:
            kept.append(point)
    return np.asarray(kept)


def build_object(label_index: int, kind: str, size: float, seed: int = 0) -> ObjectModel:
    rng = np.random.default_rng([seed, label_index])
    dense = SAMPLERS[kind](rng, size, DENSE_SAMPLES)
    vertices = thin_points(dense, config.OBJECT_VERTEX_SPACING, config.MAX_OBJECT_VERTICES)
    vertices = vertices - vertices.mean(axis=0)
    return ObjectModel(
        schema_version=config.SCHEMA_VERSION,
        label_index=label_index,
        name=f"{kind}_{label_index:02d}",
        kind=kind,
        size=size,
        vertices=vertices.tolist(),
    )


def build_object_library(seed: int = 0, count: int = config.OBJECT_COUNT) -> List[ObjectModel]:
    per_kind = -(-count // len(OBJECT_KINDS))
    objects = []
    for label_index in range(count):
        kind = OBJECT_KINDS[label_index % len(OBJECT_KINDS)]
        step = label_index // len(OBJECT_KINDS)
        size = 0.04 + 0.10 * step / max(per_kind - 1, 1)
        objects.append(build_object(label_index, kind, size, seed))
    logger.info(f"Built object library with {len(objects)} objects")
    return objects


class ObjectLibrary:
    def __init__(self, objects: List[ObjectModel]):
        self.objects = {obj.label_index: obj for obj in objects}
        self._vertices: Dict[int, torch.Tensor] = {}

    def __len__(self) -> int:
        return len(self.objects)

    def get(self, label_index: int) -> ObjectModel:
        return self.objects[label_index]

    def vertices(self, label_index: int) -> torch.Tensor:
        if label_index not in self._vertices:
            self._vertices[label_index] = torch.tensor(self.objects[label_index].vertices, dtype=DTYPE)
        return self._vertices[label_index]


def transform_vertices(vertices: torch.Tensor, rotation: torch.Tensor, translation: torch.Tensor) -> torch.Tensor:
    return vertices @ rotation.transpose(-1, -2) + translation[..., None, :]


def grip_translation(
    vertices: torch.Tensor,
    rotation: torch.Tensor,
    grip_point: torch.Tensor,
    direction: torch.Tensor,
) -> torch.Tensor:
    """Translation that puts the object's extreme vertex against `direction` on `grip_point`.

    Every other vertex then lies on the far side of the plane through `grip_point`
    normal to `direction`.
    """
    rotated = vertices @ rotation.T
    unit = direction / torch.linalg.vector_norm(direction)
    extreme = int(torch.argmin(rotated @ unit))
    return grip_point - rotated[extreme]


def rigid_follow(
    rotation: torch.Tensor,
    translation: torch.Tensor,
    frame_from: torch.Tensor,
    origin_from: torch.Tensor,
    frame_to: torch.Tensor,
    origin_to: torch.Tensor,
):
    """Carry an object pose rigidly from one hand frame (rotation, origin) to another."""
    relative = frame_to @ frame_from.transpose(-1, -2)
    new_rotation = relative @ rotation
    new_translation = relative @ (translation - origin_from) + origin_to
    return new_rotation, new_translation


def centroid(vertices: torch.Tensor, rotation: Optional[torch.Tensor] = None, translation: Optional[torch.Tensor] = None) -> torch.Tensor:
    if rotation is None:
        return vertices.mean(dim=0)
    return transform_vertices(vertices, rotation, translation).mean(dim=-2)
