import logging
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
import torch
from scipy.spatial.transform import Rotation

from config import config
from intentmotion.kinematics.rotations import sixd_to_matrix
from intentmotion.kinematics.skeleton import Skeleton
from intentmotion.models.motion_sequence import MotionSequence
from intentmotion.services.dataset_service import upsample_linear
from intentmotion.utils.exceptions import ArtifactIOError
from intentmotion.utils.file_utils import write_json

logger = logging.getLogger(__name__)

EXPORT_FORMATS = ("json", "bvh")


def _fmt(values) -> str:
    return " ".join(f"{float(value):.6f}" for value in values)


class ExportService:
    def __init__(self, skeleton: Skeleton):
        self.skeleton = skeleton
        self.children: Dict[int, List[int]] = {joint: [] for joint in range(skeleton.joint_count)}
        for joint, parent in enumerate(skeleton.parents):
            if parent >= 0:
                self.children[parent].append(joint)

    def to_document(self, sequence: MotionSequence) -> Dict[str, Any]:
        with torch.no_grad():
            positions = self.skeleton.forward_kinematics(sequence.theta_tensor(), sequence.root_tensor(), sequence.shape_tensor())
        return {
            "schema_version": config.SCHEMA_VERSION,
            "sequence_id": sequence.sequence_id,
            "action": sequence.action,
            "object_label": sequence.object_label,
            "fps": sequence.fps,
            "joint_names": self.skeleton.joint_names,
            "frames": [
                {
                    "joint_positions": positions[frame].tolist(),
                    "object_rotation": sequence.object_rotation[frame],
                    "object_translation": sequence.object_translation[frame],
                }
                for frame in range(sequence.frame_count)
            ],
        }

    def _hierarchy(self, joint: int, offsets: np.ndarray, depth: int, lines: List[str]):
        pad = "  " * depth
        name = self.skeleton.joint_names[joint]
        if self.skeleton.parents[joint] < 0:
            lines.append(f"{pad}ROOT {name}")
            lines.append(f"{pad}{{")
            lines.append(f"{pad}  OFFSET 0.000000 0.000000 0.000000")
            lines.append(f"{pad}  CHANNELS 6 Xposition Yposition Zposition Zrotation Yrotation Xrotation")
        else:
            lines.append(f"{pad}JOINT {name}")
            lines.append(f"{pad}{{")
            lines.append(f"{pad}  OFFSET {_fmt(offsets[joint])}")
            lines.append(f"{pad}  CHANNELS 3 Zrotation Yrotation Xrotation")
        if self.children[joint]:
            for child in self.children[joint]:
                self._hierarchy(child, offsets, depth + 1, lines)
        else:
            lines.append(f"{pad}  End Site")
            lines.append(f"{pad}  {{")
            lines.append(f"{pad}    OFFSET 0.000000 0.000000 0.000000")
            lines.append(f"{pad}  }}")
        lines.append(f"{pad}}}")

    def depth_first(self) -> List[int]:
        order: List[int] = []
        stack = [joint for joint, parent in enumerate(self.skeleton.parents) if parent < 0]
        while stack:
            joint = stack.pop()
            order.append(joint)
            stack.extend(reversed(self.children[joint]))
        return order

    def to_bvh(self, sequence: MotionSequence) -> str:
        """Skeletal animation text with ZYX Euler channels in degrees and root translation in meters."""
        offsets = (self.skeleton.rest_offsets * self.skeleton.bone_scales(sequence.shape_tensor())[..., None]).numpy()
        lines = ["HIERARCHY"]
        for root in (joint for joint, parent in enumerate(self.skeleton.parents) if parent < 0):
            self._hierarchy(root, offsets, 0, lines)

        matrices = sixd_to_matrix(sequence.theta_tensor()).numpy()
        frames, joints = matrices.shape[:2]
        euler = Rotation.from_matrix(matrices.reshape(-1, 3, 3)).as_euler("ZYX", degrees=True).reshape(frames, joints, 3)
        order = self.depth_first()
        lines.append("MOTION")
        lines.append(f"Frames: {frames}")
        lines.append(f"Frame Time: {1.0 / sequence.fps:.6f}")
        for frame in range(frames):
            values = list(sequence.root_translation[frame])
            for joint in order:
                values.extend(euler[frame, joint])
            lines.append(_fmt(values))
        return "\n".join(lines) + "\n"

    def export(self, sequence: MotionSequence, out_path, fmt: str = "json", frames: int = config.EXPORT_FRAMES) -> Path:
        if fmt not in EXPORT_FORMATS:
            raise ValueError(f"Unknown export format {fmt}, expected one of {EXPORT_FORMATS}")
        upsampled = upsample_linear(sequence, frames) if frames != sequence.frame_count else sequence
        target = Path(out_path)
        if fmt == "json":
            write_json(target, self.to_document(upsampled))
        else:
            try:
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_text(self.to_bvh(upsampled))
            except OSError as e:
                logger.error(f"Error writing animation {target}: {e}")
                raise ArtifactIOError(f"Cannot write animation: {e}", str(target))
        logger.info(f"Exported {sequence.sequence_id} as {fmt} with {upsampled.frame_count} frames to {target}")
        return target
