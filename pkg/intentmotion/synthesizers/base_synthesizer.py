import logging
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional, Sequence, Tuple

import torch
from torch import nn

from intentmotion.kinematics.objects import grip_translation, rigid_follow
from intentmotion.kinematics.rotations import DTYPE, identity_sixd
from intentmotion.kinematics.skeleton import Skeleton
from intentmotion.models.action_vocabulary import ActionVocabulary
from intentmotion.models.generator_config import GeneratorConfig
from intentmotion.models.motion_sequence import MotionSequence
from intentmotion.models.solver_report import SolverReport
from intentmotion.networks.layers import LatentDistribution, SkipMLP, positional_table, self_attention
from intentmotion.services.object_optimizer import FrameSolution, ObjectOptimizer
from intentmotion.utils.exceptions import DimensionMismatchError, IntentMotionError

logger = logging.getLogger(__name__)

OBJECT_MODES = ("optimize", "carry")


class BodyAttention(nn.Module):
    """Per-frame self-attention across joints.

    Each joint token is a projection of its 6D rotation and canonical rest position,
    plus a sinusoidal encoding of the joint index.
    """

    def __init__(self, canonical_positions: torch.Tensor, width: int, heads: int):
        super().__init__()
        self.heads = heads
        self.width = width
        self.register_buffer("canonical_positions", canonical_positions.clone())
        self.register_buffer("encoding", positional_table(canonical_positions.shape[0], width))
        self.token = nn.Linear(9, width)
        self.query = nn.Linear(width, width)
        self.key = nn.Linear(width, width)
        self.value = nn.Linear(width, width)

    def tokens(self, poses: torch.Tensor) -> torch.Tensor:
        positions = self.canonical_positions.expand(*poses.shape[:-1], 3)
        return self.token(torch.cat([poses, positions], dim=-1)) + self.encoding

    def forward(self, poses: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        if poses.shape[-2:] != self.canonical_positions.shape[:1] + (6,):
            raise DimensionMismatchError(
                f"Attention expects (..., {self.canonical_positions.shape[0]}, 6) poses, got {tuple(poses.shape)}"
            )
        tokens = self.tokens(poses)
        return self_attention(self.query(tokens), self.key(tokens), self.value(tokens), self.heads)


class BaseSynthesizer(nn.Module, ABC):
    """Condition encoding and autoregressive rollout shared by every synthesizer.

    Subclasses define how one frame is reconstructed (training) and sampled (inference)
    from the condition embedding and the k previous frames.
    """

    synthesizer_type = "base"

    def __init__(self, generator_config: GeneratorConfig, skeleton: Skeleton, vocabulary: ActionVocabulary):
        super().__init__()
        self.config = generator_config
        self.skeleton = skeleton
        self.k = generator_config.past_frames
        self.joint_count = skeleton.joint_count
        self.vocabulary = vocabulary
        self.actions: List[str] = vocabulary.actions()

        if generator_config.random_action_embeddings:
            generator = torch.Generator().manual_seed(generator_config.action_embedding_seed)
            table = torch.randn(len(self.actions), generator_config.action_embedding_dim, dtype=DTYPE, generator=generator)
        else:
            if vocabulary.dim != generator_config.action_embedding_dim:
                raise DimensionMismatchError(
                    f"Vocabulary embeddings have width {vocabulary.dim}, generator expects {generator_config.action_embedding_dim}"
                )
            table = torch.tensor([vocabulary.embeddings[action] for action in self.actions], dtype=DTYPE)
        self.register_buffer("action_table", table)

        condition_in = generator_config.object_count + generator_config.action_embedding_dim + generator_config.shape_dim
        self.condition_encoder = SkipMLP(condition_in, generator_config.hidden_width, generator_config.condition_dim, generator_config.hidden_depth)
        self.attention = BodyAttention(skeleton.canonical_positions, generator_config.attention_width, generator_config.attention_heads)

    def mlp(self, in_features: int, out_features: int) -> SkipMLP:
        return SkipMLP(in_features, self.config.hidden_width, out_features, self.config.hidden_depth)

    def action_indices(self, actions: Sequence[str]) -> torch.Tensor:
        unknown = [action for action in actions if action not in self.actions]
        if unknown:
            raise IntentMotionError(f"Actions {unknown} are not in the vocabulary {self.actions}")
        return torch.tensor([self.actions.index(action) for action in actions], dtype=torch.long)

    def condition_input(self, actions: Sequence[str], object_labels: torch.Tensor, shape: torch.Tensor) -> torch.Tensor:
        onehot = nn.functional.one_hot(object_labels.long(), self.config.object_count).to(DTYPE)
        embedding = self.action_table[self.action_indices(actions)]
        return torch.cat([onehot, embedding, shape], dim=-1)

    def encode_condition(self, actions: Sequence[str], object_labels: torch.Tensor, shape: torch.Tensor) -> torch.Tensor:
        return self.condition_encoder(self.condition_input(actions, object_labels, shape))

    def attend_body(self, past_poses: torch.Tensor) -> torch.Tensor:
        if past_poses.shape[-3] != self.k:
            raise DimensionMismatchError(f"Expected {self.k} past frames, got {past_poses.shape[-3]}")
        attended, _ = self.attention(past_poses)
        return attended

    def pose_features(self, past_poses: torch.Tensor) -> torch.Tensor:
        """Past-pose features for body context: attended tokens, or raw poses with attention disabled."""
        if self.config.no_body_attention:
            return past_poses.flatten(1)
        return self.attend_body(past_poses).flatten(1)

    @staticmethod
    def object_context(past_translation: torch.Tensor, past_rotation: torch.Tensor) -> torch.Tensor:
        return torch.cat([past_translation.flatten(1), past_rotation.flatten(1)], dim=-1)

    def to_rotations(self, output: torch.Tensor, joints: int) -> torch.Tensor:
        """Decoder output as 6D rotations offset from the identity."""
        return output.reshape(output.shape[0], joints, 6) + identity_sixd(joints)

    def latent_noise(self, dist: LatentDistribution, noise: Optional[torch.Tensor]) -> torch.Tensor:
        if noise is not None:
            return noise
        if self.training:
            return torch.randn_like(dist.mu)
        return torch.zeros_like(dist.mu)

    def draw_noise(self, count: int, generator: Optional[torch.Generator] = None) -> Dict[str, torch.Tensor]:
        return {name: torch.randn(count, dim, dtype=DTYPE, generator=generator) for name, dim in self.latent_dims().items()}

    @abstractmethod
    def latent_dims(self) -> Dict[str, int]:
        pass

    @abstractmethod
    def reconstruct(
        self,
        phi: torch.Tensor,
        past_theta: torch.Tensor,
        past_translation: torch.Tensor,
        past_rotation: torch.Tensor,
        current_theta: torch.Tensor,
        noise: Optional[Dict[str, torch.Tensor]] = None,
    ) -> Tuple[torch.Tensor, Dict[str, LatentDistribution]]:
        pass

    @abstractmethod
    def sample(
        self,
        phi: torch.Tensor,
        past_theta: torch.Tensor,
        past_translation: torch.Tensor,
        past_rotation: torch.Tensor,
        noise: Dict[str, torch.Tensor],
    ) -> torch.Tensor:
        pass

    def rollout(
        self,
        seed_sequence: MotionSequence,
        action: str,
        object_label: int,
        seed: int,
        object_vertices: torch.Tensor,
        object_mode: str = "optimize",
        optimizer: Optional[ObjectOptimizer] = None,
        provenance: Optional[Dict[str, Any]] = None,
    ) -> Tuple[MotionSequence, Optional[SolverReport]]:
        """Synthesize frames k..T-1 from the first k frames of `seed_sequence`."""
        if object_mode not in OBJECT_MODES:
            raise ValueError(f"Unknown object mode {object_mode}, expected one of {OBJECT_MODES}")
        total = self.config.sequence_frames
        if seed_sequence.frame_count < self.k:
            raise DimensionMismatchError(f"Seed sequence has {seed_sequence.frame_count} frames, need {self.k}")
        optimizer = optimizer or ObjectOptimizer(self.skeleton)

        self.eval()
        generator = torch.Generator().manual_seed(seed)
        shape = seed_sequence.shape_tensor()
        acting = seed_sequence.acting_hand
        hands = ["left", "right"] if acting == "both" else [acting]

        theta = torch.zeros(total, self.joint_count, 6, dtype=DTYPE)
        root = torch.zeros(total, 3, dtype=DTYPE)
        rotation = torch.zeros(total, 3, 3, dtype=DTYPE)
        translation = torch.zeros(total, 3, dtype=DTYPE)
        theta[: self.k] = seed_sequence.theta_tensor()[: self.k]
        root[: self.k] = seed_sequence.root_tensor()[: self.k]
        root[self.k:] = root[self.k - 1]
        rotation[: self.k] = seed_sequence.object_rotation_tensor()[: self.k]
        translation[: self.k] = seed_sequence.object_translation_tensor()[: self.k]
        if object_label != seed_sequence.object_label:
            self._regrip_seed(theta, root, shape, rotation, translation, object_vertices, hands[0])

        with torch.no_grad():
            phi = self.encode_condition([action], torch.tensor([object_label]), shape[None])

        solutions: List[FrameSolution] = []
        refs = None
        if object_mode == "optimize":
            start, refs = optimizer.initial_solution(theta[0], root[0], shape, rotation[0], translation[0], object_vertices, hands)
            solutions = [start] + [
                optimizer.pose_solution(theta[frame], root[frame], shape, rotation[frame], translation[frame], hands)
                for frame in range(1, self.k)
            ]

        for frame in range(self.k, total):
            window = slice(frame - self.k, frame)
            with torch.no_grad():
                noise = self.draw_noise(1, generator)
                theta[frame] = self.sample(phi, theta[None, window], translation[None, window], rotation[None, window], noise)[0]
            try:
                if object_mode == "optimize":
                    with torch.enable_grad():
                        solution = optimizer.solve_frame(theta[frame], root[frame], shape, solutions[-1], refs, object_vertices)
                    for hand, hand_theta in solution.hand_theta.items():
                        theta[frame, self.skeleton.hand_joints[hand]] = hand_theta
                    rotation[frame], translation[frame] = solution.rotation, solution.translation
                    solutions.append(solution)
                else:
                    rotation[frame], translation[frame] = self._carry(theta, root, shape, rotation, translation, frame, hands[0])
            except IntentMotionError as e:
                logger.error(f"Object pose failed at frame {frame}: {e}")
                raise

        switch = None
        if object_mode == "optimize" and acting != "both":
            receiving = seed_sequence.receiving_hand or ("left" if acting == "right" else "right")
            solutions, switch = optimizer.transfer_grasp(action, theta, root, shape, solutions, object_vertices, acting, receiving)
            for frame, solution in enumerate(solutions):
                rotation[frame], translation[frame] = solution.rotation, solution.translation
                for hand, hand_theta in solution.hand_theta.items():
                    theta[frame, self.skeleton.hand_joints[hand]] = hand_theta

        meta = {"seed": seed, "object_mode": object_mode, "seed_sequence": seed_sequence.sequence_id, "synthesizer": self.synthesizer_type}
        meta.update(provenance or {})
        sequence = MotionSequence(
            sequence_id=f"synth_{action}_{object_label:02d}_{seed}",
            subject_id=seed_sequence.subject_id,
            action=action,
            object_label=object_label,
            acting_hand=acting,
            receiving_hand=seed_sequence.receiving_hand,
            shape=seed_sequence.shape,
            fps=seed_sequence.fps,
            theta=theta.tolist(),
            root_translation=root.tolist(),
            object_rotation=rotation.tolist(),
            object_translation=translation.tolist(),
            switch_frame=switch.frame if switch else None,
            provenance=meta,
        )
        report = optimizer.build_report(sequence.sequence_id, solutions, switch) if object_mode == "optimize" else None
        logger.info(f"Rolled out {sequence.sequence_id} ({object_mode} objects)")
        return sequence, report

    def _wrist_frame(self, theta, root, shape, frame, hand):
        positions, rotations = self.skeleton.forward_kinematics(theta[frame], root[frame], shape, return_rotations=True)
        wrist = self.skeleton.hand_joints[hand][0]
        return rotations[wrist], positions[wrist], positions, rotations

    def _carry(self, theta, root, shape, rotation, translation, frame, hand):
        """Transport the previous object pose rigidly with the wrist."""
        prev_rotation, prev_origin, _, _ = self._wrist_frame(theta, root, shape, frame - 1, hand)
        rotation_now, origin_now, _, _ = self._wrist_frame(theta, root, shape, frame, hand)
        return rigid_follow(rotation[frame - 1], translation[frame - 1], prev_rotation, prev_origin, rotation_now, origin_now)

    def _regrip_seed(self, theta, root, shape, rotation, translation, vertices, hand):
        """Place a different object in the seed frames' grasp, then carry it through the seed window."""
        _, _, positions, rotations = self._wrist_frame(theta, root, shape, 0, hand)
        anchors = self.skeleton.anchor_points(positions, rotations, shape, hand)
        grip_point = anchors[self.skeleton.template.grip_anchor[hand]]
        translation[0] = grip_translation(vertices, rotation[0], grip_point, self.skeleton.finger_direction(rotations, hand))
        for frame in range(1, self.k):
            rotation[frame], translation[frame] = self._carry(theta, root, shape, rotation, translation, frame, hand)
