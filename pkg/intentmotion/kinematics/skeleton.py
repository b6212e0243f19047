"""Simplified parametric body: 55-joint template, bone-scale shape model and forward kinematics.

Frame convention: y up, +x toward the character's left, +z forward. The rest pose is a
T-pose with the arms along +-x.
"""
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch

from config import config
from intentmotion.kinematics.rotations import DTYPE, sixd_to_matrix
from intentmotion.models.skeleton_template import HandAnchor, SkeletonTemplate
from intentmotion.utils.exceptions import DegenerateInputError, DimensionMismatchError

logger = logging.getLogger(__name__)

HANDS = ("left", "right")
FINGERS = ("index", "middle", "pinky", "ring", "thumb")
BONE_GROUPS = ("spine", "legs", "arms", "hands")
MIN_BONE_SCALE = 0.5
MAX_BONE_SCALE = 2.0

# finger base offsets from the wrist for the left hand; x is mirrored for the right
FINGER_BASES = {
    "index": (0.085, 0.0, 0.025),
    "middle": (0.09, 0.0, 0.005),
    "pinky": (0.075, 0.0, -0.035),
    "ring": (0.085, 0.0, -0.015),
    "thumb": (0.03, -0.01, 0.04),
}
PHALANGES = {
    "index": ((0.03, 0.0, 0.0), (0.02, 0.0, 0.0)),
    "middle": ((0.035, 0.0, 0.0), (0.025, 0.0, 0.0)),
    "pinky": ((0.022, 0.0, 0.0), (0.018, 0.0, 0.0)),
    "ring": ((0.03, 0.0, 0.0), (0.02, 0.0, 0.0)),
    "thumb": ((0.025, 0.0, 0.01), (0.02, 0.0, 0.005)),
}
TIP_ANCHOR = (0.012, -0.006, 0.0)
PAD_ANCHOR = (0.0, -0.008, 0.006)

# name, parent name, rest offset, bone group
BODY_LAYOUT = [
    ("pelvis", None, (0.0, 0.0, 0.0), "spine"),
    ("left_hip", "pelvis", (0.09, -0.08, 0.0), "legs"),
    ("right_hip", "pelvis", (-0.09, -0.08, 0.0), "legs"),
    ("spine1", "pelvis", (0.0, 0.1, 0.0), "spine"),
    ("left_knee", "left_hip", (0.0, -0.4, 0.0), "legs"),
    ("right_knee", "right_hip", (0.0, -0.4, 0.0), "legs"),
    ("spine2", "spine1", (0.0, 0.13, 0.0), "spine"),
    ("left_ankle", "left_knee", (0.0, -0.4, 0.0), "legs"),
    ("right_ankle", "right_knee", (0.0, -0.4, 0.0), "legs"),
    ("spine3", "spine2", (0.0, 0.05, 0.0), "spine"),
    ("left_foot", "left_ankle", (0.0, -0.05, 0.12), "legs"),
    ("right_foot", "right_ankle", (0.0, -0.05, 0.12), "legs"),
    ("neck", "spine3", (0.0, 0.22, 0.0), "spine"),
    ("left_collar", "spine3", (0.07, 0.15, 0.0), "spine"),
    ("right_collar", "spine3", (-0.07, 0.15, 0.0), "spine"),
    ("head", "neck", (0.0, 0.1, 0.0), "spine"),
    ("left_shoulder", "left_collar", (0.1, 0.02, 0.0), "arms"),
    ("right_shoulder", "right_collar", (-0.1, 0.02, 0.0), "arms"),
    ("left_elbow", "left_shoulder", (0.27, 0.0, 0.0), "arms"),
    ("right_elbow", "right_shoulder", (-0.27, 0.0, 0.0), "arms"),
    ("left_wrist", "left_elbow", (0.25, 0.0, 0.0), "arms"),
    ("right_wrist", "right_elbow", (-0.25, 0.0, 0.0), "arms"),
    ("jaw", "head", (0.0, -0.02, 0.08), "spine"),
    ("left_eye", "head", (0.03, 0.07, 0.08), "spine"),
    ("right_eye", "head", (-0.03, 0.07, 0.08), "spine"),
]
ARM_ROOTS = ("shoulder", "elbow", "wrist")


def _mirror(offset: Tuple[float, float, float], sign: float) -> List[float]:
    return [sign * offset[0], offset[1], offset[2]]


def build_default_template(seed: int = config.SHAPE_WEIGHT_SEED) -> SkeletonTemplate:
    names: List[str] = []
    parents: List[int] = []
    offsets: List[List[float]] = []
    groups: List[str] = []
    for name, parent, offset, group in BODY_LAYOUT:
        names.append(name)
        parents.append(-1 if parent is None else names.index(parent))
        offsets.append(list(offset))
        groups.append(group)

    wrist_joints: Dict[str, int] = {}
    finger_joints: Dict[str, List[int]] = {}
    hand_anchors: Dict[str, List[HandAnchor]] = {}
    grip_anchor: Dict[str, int] = {}
    hand_axis_sign: Dict[str, float] = {}
    for hand in HANDS:
        sign = 1.0 if hand == "left" else -1.0
        wrist = names.index(f"{hand}_wrist")
        wrist_joints[hand] = wrist
        hand_axis_sign[hand] = sign
        finger_joints[hand] = []
        for finger in FINGERS:
            chain = [FINGER_BASES[finger], *PHALANGES[finger]]
            parent = wrist
            for level, offset in enumerate(chain, start=1):
                names.append(f"{hand}_{finger}{level}")
                parents.append(parent)
                offsets.append(_mirror(offset, sign))
                groups.append("hands")
                parent = len(names) - 1
                finger_joints[hand].append(parent)

        anchors: List[HandAnchor] = []
        for position, joint in enumerate([wrist, *finger_joints[hand]]):
            pad_side = 1.0 if position % 2 == 0 else -1.0
            anchors.append(HandAnchor(joint=joint, offset=_mirror(TIP_ANCHOR, sign)))
            anchors.append(HandAnchor(joint=joint, offset=[PAD_ANCHOR[0], PAD_ANCHOR[1], pad_side * PAD_ANCHOR[2]]))
        hand_anchors[hand] = anchors
        middle_tip = names.index(f"{hand}_middle3")
        grip_anchor[hand] = 2 * ([wrist, *finger_joints[hand]].index(middle_tip))

    arm_joints = sorted(
        [names.index(f"{hand}_{part}") for hand in HANDS for part in ARM_ROOTS]
        + [joint for hand in HANDS for joint in finger_joints[hand]]
    )

    rng = np.random.default_rng(seed)
    weights = rng.uniform(-0.03, 0.03, size=(len(BONE_GROUPS), config.SHAPE_DIM))
    shape_weights = {group: weights[index].tolist() for index, group in enumerate(BONE_GROUPS)}

    return SkeletonTemplate(
        schema_version=config.SCHEMA_VERSION,
        joint_names=names,
        parents=parents,
        rest_offsets=offsets,
        bone_groups=groups,
        shape_weights=shape_weights,
        arm_joints=arm_joints,
        wrist_joints=wrist_joints,
        finger_joints=finger_joints,
        hand_anchors=hand_anchors,
        grip_anchor=grip_anchor,
        hand_axis_sign=hand_axis_sign,
    )


class Skeleton:
    """Tensor view of a SkeletonTemplate. Immutable after construction."""

    def __init__(self, template: SkeletonTemplate):
        self.template = template
        self.joint_names = list(template.joint_names)
        self.parents = list(template.parents)
        self.joint_count = len(self.parents)
        self.rest_offsets = torch.tensor(template.rest_offsets, dtype=DTYPE)

        self.arm_joints = torch.tensor(sorted(template.arm_joints), dtype=torch.long)
        arm_set = set(template.arm_joints)
        self.body_joints = torch.tensor([j for j in range(self.joint_count) if j not in arm_set], dtype=torch.long)
        self.inverse_partition = torch.argsort(torch.cat([self.arm_joints, self.body_joints]))

        group_names = sorted(template.shape_weights.keys())
        self.shape_weights = torch.tensor([template.shape_weights[name] for name in group_names], dtype=DTYPE)
        self.joint_groups = torch.tensor([group_names.index(group) for group in template.bone_groups], dtype=torch.long)

        self.hand_joints: Dict[str, List[int]] = {
            hand: [template.wrist_joints[hand], *template.finger_joints[hand]] for hand in template.wrist_joints
        }
        self.anchor_joints = {
            hand: torch.tensor([anchor.joint for anchor in anchors], dtype=torch.long)
            for hand, anchors in template.hand_anchors.items()
        }
        self.anchor_offsets = {
            hand: torch.tensor([anchor.offset for anchor in anchors], dtype=DTYPE)
            for hand, anchors in template.hand_anchors.items()
        }

        rest_theta = torch.zeros(self.joint_count, 6, dtype=DTYPE)
        rest_theta[:, 0] = 1.0
        rest_theta[:, 4] = 1.0
        self.rest_theta = rest_theta
        self.canonical_positions = self.forward_kinematics(rest_theta, torch.zeros(3, dtype=DTYPE))

    @classmethod
    def default(cls) -> "Skeleton":
        return cls(build_default_template())

    @property
    def arm_count(self) -> int:
        return int(self.arm_joints.numel())

    @property
    def body_count(self) -> int:
        return int(self.body_joints.numel())

    def hands(self) -> List[str]:
        return list(self.hand_joints.keys())

    def bone_scales(self, shape: Optional[torch.Tensor] = None) -> torch.Tensor:
        if shape is None:
            return torch.ones(self.joint_count, dtype=DTYPE)
        if shape.shape[-1] != self.shape_weights.shape[1]:
            raise DimensionMismatchError(
                f"Body shape must have {self.shape_weights.shape[1]} coefficients, got {shape.shape[-1]}",
                expected=(self.shape_weights.shape[1],),
                actual=tuple(shape.shape),
            )
        per_joint = self.shape_weights[self.joint_groups]
        return torch.exp(shape @ per_joint.T)

    def validate_shape(self, shape: torch.Tensor):
        scales = self.bone_scales(shape)
        if not bool(torch.isfinite(scales).all()):
            raise DegenerateInputError("Body shape produces non-finite bone scales")
        if bool((scales <= MIN_BONE_SCALE).any()) or bool((scales >= MAX_BONE_SCALE).any()):
            raise DegenerateInputError(
                f"Body shape bone scales must lie in ({MIN_BONE_SCALE}, {MAX_BONE_SCALE}), "
                f"got [{float(scales.min()):.3f}, {float(scales.max()):.3f}]"
            )

    def _check_pose(self, theta: torch.Tensor, translation: torch.Tensor):
        if theta.shape[-2:] != (self.joint_count, 6):
            raise DimensionMismatchError(
                f"Pose must have shape (..., {self.joint_count}, 6), got {tuple(theta.shape)}",
                expected=(self.joint_count, 6),
                actual=tuple(theta.shape),
            )
        if translation.shape[-1] != 3:
            raise DimensionMismatchError(
                f"Root translation must be a 3-vector, got {tuple(translation.shape)}",
                expected=(3,),
                actual=tuple(translation.shape),
            )

    def forward_kinematics(
        self,
        theta: torch.Tensor,
        translation: torch.Tensor,
        shape: Optional[torch.Tensor] = None,
        return_rotations: bool = False,
    ):
        self._check_pose(theta, translation)
        local = sixd_to_matrix(theta)
        offsets = self.rest_offsets * self.bone_scales(shape)[..., None]

        rotations: List[torch.Tensor] = []
        positions: List[torch.Tensor] = []
        for joint, parent in enumerate(self.parents):
            if parent < 0:
                rotations.append(local[..., joint, :, :])
                positions.append(translation.expand(local.shape[:-3] + (3,)))
                continue
            parent_rotation = rotations[parent]
            step = (parent_rotation @ offsets[..., joint, :, None]).squeeze(-1)
            positions.append(positions[parent] + step)
            rotations.append(parent_rotation @ local[..., joint, :, :])

        joint_positions = torch.stack(positions, dim=-2)
        if return_rotations:
            return joint_positions, torch.stack(rotations, dim=-3)
        return joint_positions

    def hand_vertices(
        self,
        theta: torch.Tensor,
        translation: torch.Tensor,
        shape: Optional[torch.Tensor] = None,
        hand: str = "right",
    ) -> torch.Tensor:
        positions, rotations = self.forward_kinematics(theta, translation, shape, return_rotations=True)
        return self.anchor_points(positions, rotations, shape, hand)

    def anchor_points(
        self,
        positions: torch.Tensor,
        rotations: torch.Tensor,
        shape: Optional[torch.Tensor],
        hand: str,
    ) -> torch.Tensor:
        joints = self.anchor_joints[hand]
        scales = self.bone_scales(shape)[..., joints]
        local = self.anchor_offsets[hand] * scales[..., None]
        world = (rotations[..., joints, :, :] @ local[..., None]).squeeze(-1)
        return positions[..., joints, :] + world

    def hand_points_from_parent(
        self,
        parent_rotation: torch.Tensor,
        wrist_position: torch.Tensor,
        hand_theta: torch.Tensor,
        scales: torch.Tensor,
        hand: str,
    ) -> torch.Tensor:
        """Kinematics of one hand subtree with the forearm held fixed.

        hand_theta holds the 6D rotations of the wrist followed by the 15 finger joints.
        """
        hand_joints = self.hand_joints[hand]
        local = sixd_to_matrix(hand_theta)
        offsets = self.rest_offsets * scales[..., None]

        rotations: Dict[int, torch.Tensor] = {}
        positions: Dict[int, torch.Tensor] = {}
        for slot, joint in enumerate(hand_joints):
            if slot == 0:
                positions[joint] = wrist_position
                rotations[joint] = parent_rotation @ local[slot]
                continue
            parent = self.parents[joint]
            positions[joint] = positions[parent] + rotations[parent] @ offsets[joint]
            rotations[joint] = rotations[parent] @ local[slot]

        joints = self.anchor_joints[hand].tolist()
        anchor_local = self.anchor_offsets[hand] * scales[self.anchor_joints[hand]][:, None]
        stacked_rotations = torch.stack([rotations[j] for j in joints])
        stacked_positions = torch.stack([positions[j] for j in joints])
        return stacked_positions + (stacked_rotations @ anchor_local[..., None]).squeeze(-1)

    def finger_direction(self, rotations: torch.Tensor, hand: str) -> torch.Tensor:
        """World-space direction the straight fingers of `hand` point along."""
        wrist = self.template.wrist_joints[hand]
        return self.template.hand_axis_sign[hand] * rotations[..., wrist, :, 0]

    def split_pose(self, theta: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        return theta[..., self.arm_joints, :], theta[..., self.body_joints, :]

    def merge_pose(self, arm_part: torch.Tensor, body_part: torch.Tensor) -> torch.Tensor:
        if arm_part.shape[-2] != self.arm_count or body_part.shape[-2] != self.body_count:
            raise DimensionMismatchError(
                f"Expected {self.arm_count} arm and {self.body_count} body joints, "
                f"got {arm_part.shape[-2]} and {body_part.shape[-2]}",
            )
        merged = torch.cat([arm_part, body_part], dim=-2)
        return merged[..., self.inverse_partition, :]
