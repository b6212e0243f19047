from typing import Dict, List

from pydantic import BaseModel, Field, model_validator


class HandAnchor(BaseModel):
    joint: int
    offset: List[float] = Field(min_length=3, max_length=3)


class SkeletonTemplate(BaseModel):
    schema_version: str = "1.0"
    joint_names: List[str]
    parents: List[int]
    rest_offsets: List[List[float]]
    bone_groups: List[str]
    shape_weights: Dict[str, List[float]]
    arm_joints: List[int]
    wrist_joints: Dict[str, int]
    finger_joints: Dict[str, List[int]]
    hand_anchors: Dict[str, List[HandAnchor]]
    grip_anchor: Dict[str, int]
    hand_axis_sign: Dict[str, float]

    @model_validator(mode="after")
    def check_tree(self):
        count = len(self.joint_names)
        if len(self.parents) != count or len(self.rest_offsets) != count or len(self.bone_groups) != count:
            raise ValueError("joint_names, parents, rest_offsets and bone_groups must have equal length")
        if count == 0 or self.parents[0] != -1:
            raise ValueError("joint 0 must be the root")
        for joint, parent in enumerate(self.parents[1:], start=1):
            if not 0 <= parent < joint:
                raise ValueError(f"joint {joint} has parent {parent}; parents must precede children")
        for offset in self.rest_offsets:
            if len(offset) != 3:
                raise ValueError("rest offsets must be 3-vectors")
        if any(not 0 <= joint < count for joint in self.arm_joints):
            raise ValueError("arm joint index out of range")
        if len(set(self.arm_joints)) != len(self.arm_joints):
            raise ValueError("arm joints must be unique")
        for group in self.bone_groups:
            if group not in self.shape_weights:
                raise ValueError(f"bone group {group} has no shape weights")
        for hand, anchors in self.hand_anchors.items():
            hand_joints = {self.wrist_joints[hand], *self.finger_joints[hand]}
            for anchor in anchors:
                if anchor.joint not in hand_joints:
                    raise ValueError(f"{hand} anchor references joint {anchor.joint} outside the hand")
            if not 0 <= self.grip_anchor[hand] < len(anchors):
                raise ValueError(f"{hand} grip anchor out of range")
        return self
