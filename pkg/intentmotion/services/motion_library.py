"""Procedural raw motion clips for the synthetic interaction dataset.

Clips are built from a handful of arm key poses blended with smoothstep phases.
Key poses are written for the left arm as axis-angles of (shoulder, elbow, wrist);
the right arm uses the mirror image (x, -y, -z).
"""
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
import torch

from config import config
from intentmotion.kinematics.objects import grip_translation, rigid_follow
from intentmotion.kinematics.rotations import DTYPE, axis_angle_to_matrix, matrix_to_sixd
from intentmotion.kinematics.skeleton import Skeleton

logger = logging.getLogger(__name__)

ARM_PARTS = ("shoulder", "elbow", "wrist")

KEY_POSES: Dict[str, Tuple[Tuple[float, float, float], ...]] = {
    "down": ((0.0, 0.0, -1.3), (0.0, 0.0, 0.0), (0.0, 0.0, 0.0)),
    "hold": ((0.0, -0.3, -1.2), (0.0, -1.2, 0.0), (0.0, 0.0, 0.0)),
    "to_head": ((0.0, -0.9, -0.2), (0.0, -2.2, 0.0), (0.3, 0.0, 0.0)),
    "extend_forward": ((0.0, -1.3, -0.2), (0.0, -0.2, 0.0), (0.0, 0.0, 0.0)),
    "inspect": ((0.0, -0.9, -0.6), (0.0, -1.6, 0.0), (0.8, 0.0, 0.0)),
    "meet": ((0.0, -1.815, 0.0), (0.0, 0.0, 0.0), (0.0, 0.0, 0.0)),
}

SIGNATURE_SCALE = 0.3
POSE_NOISE = 0.05
LEG_NOISE = 0.02
SWAY_AMPLITUDE = 0.03
PASS_LEAN = 0.25
RETURN_FRACTION = {"use": 0.4, "pass": 0.5}


@dataclass
class RawClip:
    theta: torch.Tensor
    root_translation: torch.Tensor
    object_rotation: torch.Tensor
    object_translation: torch.Tensor
    regrip_frame: Optional[int] = None


def smoothstep(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def mirror(axis_angle: np.ndarray) -> np.ndarray:
    return axis_angle * np.array([1.0, -1.0, -1.0])


def key_pose(name: str, side: str) -> np.ndarray:
    pose = np.asarray(KEY_POSES[name], dtype=np.float64)
    return pose if side == "left" else mirror(pose)


def action_signature(action_index: int, seed: int) -> np.ndarray:
    """Per-action offsets added to the acting arm's target pose."""
    rng = np.random.default_rng([seed, 7919, action_index])
    return rng.uniform(-SIGNATURE_SCALE, SIGNATURE_SCALE, size=(len(ARM_PARTS), 3))


def use_phase(u: np.ndarray, family: str) -> np.ndarray:
    """Reach the target by mid-clip, hold, then return part of the way."""
    reach = smoothstep(u / 0.5)
    back = smoothstep((u - 0.7) / 0.3)
    return reach - RETURN_FRACTION[family] * back


class MotionLibrary:
    def __init__(self, skeleton: Skeleton, seed: int = 0):
        self.skeleton = skeleton
        self.seed = seed
        self.index = {name: position for position, name in enumerate(skeleton.joint_names)}
        self.leg_joints = [position for name, position in self.index.items() if any(part in name for part in ("hip", "knee", "ankle", "foot"))]
        self.spine_joints = [self.index[name] for name in ("spine1", "spine2", "spine3")]

    def _arm_slots(self, side: str):
        return [self.index[f"{side}_{part}"] for part in ARM_PARTS]

    def standing_root(self, shape: torch.Tensor) -> torch.Tensor:
        rest = self.skeleton.forward_kinematics(self.skeleton.rest_theta, torch.zeros(3, dtype=DTYPE), shape)
        return torch.tensor([0.0, -float(rest[:, 1].min()), 0.0], dtype=DTYPE)

    def compose(
        self,
        action: str,
        action_index: int,
        length: int,
        rng: np.random.Generator,
        regrip_frame: Optional[int] = None,
    ) -> np.ndarray:
        """Axis-angle pose track of shape (length, J, 3)."""
        intent = config.get_intent_config(action)
        family = intent["family"]
        u = np.linspace(0.0, 1.0, length)[:, None, None]
        aa = np.zeros((length, self.skeleton.joint_count, 3))

        signature = action_signature(action_index, self.seed)
        noise = rng.normal(0.0, POSE_NOISE, size=(2, len(ARM_PARTS), 3))
        right, left = self._arm_slots("right"), self._arm_slots("left")

        if family == "offhand":
            s = regrip_frame / (length - 1)
            approach = smoothstep(u / s)
            depart = smoothstep((u - s) / (1.0 - s))
            meet_right = key_pose("meet", "right") + noise[0]
            meet_left = mirror(meet_right)
            hold_right = key_pose("hold", "right") + mirror(signature)
            hold_left = key_pose("hold", "left")
            right_track = hold_right + (meet_right - hold_right) * approach
            right_track = right_track + (key_pose("down", "right") - meet_right) * depart
            left_track = hold_left + (meet_left - hold_left) * approach
            left_track = left_track + (hold_left - meet_left) * depart
        else:
            phase = use_phase(u, family)
            hold_right = key_pose("hold", "right")
            target = key_pose(intent["key_pose"], "right") + mirror(signature) + noise[0]
            right_track = hold_right + (target - hold_right) * phase
            left_track = np.broadcast_to(key_pose("down", "left") + noise[1], (length, len(ARM_PARTS), 3))

        aa[:, right] = right_track
        aa[:, left] = left_track

        sway_phase = rng.uniform(0.0, 2.0 * np.pi)
        sway = SWAY_AMPLITUDE * np.sin(2.0 * np.pi * u[:, 0, 0] + sway_phase)
        aa[:, self.spine_joints, 0] += sway[:, None]
        if family == "pass":
            aa[:, self.spine_joints[0], 0] += PASS_LEAN * smoothstep((u[:, 0, 0] - 0.4) / 0.4)
        aa[:, self.leg_joints] += rng.normal(0.0, LEG_NOISE, size=(len(self.leg_joints), 3))
        return aa

    def raw_clip(
        self,
        action: str,
        action_index: int,
        object_vertices: torch.Tensor,
        shape: torch.Tensor,
        length: int,
        rng: np.random.Generator,
    ) -> RawClip:
        family = config.get_intent_config(action)["family"]
        regrip = None
        if family == "offhand":
            regrip = int(round(0.5 * (length - 1))) + int(rng.integers(-2, 3))

        aa = self.compose(action, action_index, length, rng, regrip)
        theta = matrix_to_sixd(axis_angle_to_matrix(torch.tensor(aa, dtype=DTYPE)))
        root = self.standing_root(shape).expand(length, 3).clone()
        positions, rotations = self.skeleton.forward_kinematics(theta, root, shape, return_rotations=True)

        object_rotation, object_translation = self._attach(object_vertices, positions, rotations, shape, "right", 0, length)
        if regrip is not None:
            left_rotation, left_translation = self._attach(
                object_vertices, positions, rotations, shape, "left", regrip, length, initial_rotation=object_rotation[regrip]
            )
            object_rotation[regrip:] = left_rotation[regrip:]
            object_translation[regrip:] = left_translation[regrip:]

        return RawClip(theta, root, object_rotation, object_translation, regrip)

    def _attach(self, vertices, positions, rotations, shape, hand, start, length, initial_rotation=None):
        """Grip the object at `start` with the middle fingertip of `hand` and carry it with the wrist."""
        wrist = self.skeleton.hand_joints[hand][0]
        anchors = self.skeleton.anchor_points(positions[start], rotations[start], shape, hand)
        grip_point = anchors[self.skeleton.template.grip_anchor[hand]]
        direction = self.skeleton.finger_direction(rotations[start], hand)

        rotation0 = torch.eye(3, dtype=DTYPE) if initial_rotation is None else initial_rotation
        translation0 = grip_translation(vertices, rotation0, grip_point, direction)

        object_rotation = torch.zeros(length, 3, 3, dtype=DTYPE)
        object_translation = torch.zeros(length, 3, dtype=DTYPE)
        for frame in range(start, length):
            object_rotation[frame], object_translation[frame] = rigid_follow(
                rotation0,
                translation0,
                rotations[start, wrist],
                positions[start, wrist],
                rotations[frame, wrist],
                positions[frame, wrist],
            )
        return object_rotation, object_translation
