import logging
from typing import Dict, Optional, Tuple

import torch

from intentmotion.kinematics.skeleton import Skeleton
from intentmotion.models.action_vocabulary import ActionVocabulary
from intentmotion.models.generator_config import GeneratorConfig
from intentmotion.networks.layers import LatentDistribution, reparameterize
from intentmotion.synthesizers.base_synthesizer import BaseSynthesizer

logger = logging.getLogger(__name__)


class DecoupledSynthesizer(BaseSynthesizer):
    """Arm CVAE followed by a body CVAE.

    The arm module sees only past arm rotations and the object; the body module
    additionally sees the attended past poses and the arms just synthesized for
    the current frame.
    """

    synthesizer_type = "decoupled"

    def __init__(self, generator_config: GeneratorConfig, skeleton: Skeleton, vocabulary: ActionVocabulary):
        super().__init__(generator_config, skeleton, vocabulary)
        k = generator_config.past_frames
        self.arm_width = skeleton.arm_count * 6
        self.body_width = skeleton.body_count * 6
        feature_width = 6 if generator_config.no_body_attention else generator_config.attention_width
        object_width = 12 * k

        self.arm_context_width = generator_config.condition_dim + self.arm_width * k + object_width
        self.body_context_width = (
            generator_config.condition_dim + self.arm_width * (k + 1) + skeleton.joint_count * feature_width * k + object_width
        )
        self.arm_encoder = self.mlp(self.arm_context_width + self.arm_width, 2 * generator_config.arm_latent_dim)
        self.arm_decoder = self.mlp(generator_config.arm_latent_dim + self.arm_context_width, self.arm_width)
        self.body_encoder = self.mlp(self.body_context_width + self.body_width, 2 * generator_config.body_latent_dim)
        self.body_decoder = self.mlp(generator_config.body_latent_dim + self.body_context_width, self.body_width)

    def latent_dims(self) -> Dict[str, int]:
        return {"arm": self.config.arm_latent_dim, "body": self.config.body_latent_dim}

    def arm_context(self, phi, past_theta, past_translation, past_rotation) -> torch.Tensor:
        past_arm, _ = self.skeleton.split_pose(past_theta)
        return torch.cat([phi, past_arm.flatten(1), self.object_context(past_translation, past_rotation)], dim=-1)

    def body_context(self, phi, past_theta, past_translation, past_rotation, arm_now) -> torch.Tensor:
        past_arm, _ = self.skeleton.split_pose(past_theta)
        return torch.cat(
            [
                phi,
                past_arm.flatten(1),
                arm_now.flatten(1),
                self.pose_features(past_theta),
                self.object_context(past_translation, past_rotation),
            ],
            dim=-1,
        )

    def arm_encode(self, arm_ctx: torch.Tensor, current_arm: torch.Tensor) -> LatentDistribution:
        return LatentDistribution.from_params(self.arm_encoder(torch.cat([arm_ctx, current_arm.flatten(1)], dim=-1)))

    def arm_decode(self, z_arm: torch.Tensor, arm_ctx: torch.Tensor) -> torch.Tensor:
        return self.to_rotations(self.arm_decoder(torch.cat([z_arm, arm_ctx], dim=-1)), self.skeleton.arm_count)

    def body_encode(self, body_ctx: torch.Tensor, current_body: torch.Tensor) -> LatentDistribution:
        return LatentDistribution.from_params(self.body_encoder(torch.cat([body_ctx, current_body.flatten(1)], dim=-1)))

    def body_decode(self, z_body: torch.Tensor, body_ctx: torch.Tensor) -> torch.Tensor:
        return self.to_rotations(self.body_decoder(torch.cat([z_body, body_ctx], dim=-1)), self.skeleton.body_count)

    def reconstruct(
        self,
        phi: torch.Tensor,
        past_theta: torch.Tensor,
        past_translation: torch.Tensor,
        past_rotation: torch.Tensor,
        current_theta: torch.Tensor,
        noise: Optional[Dict[str, torch.Tensor]] = None,
    ) -> Tuple[torch.Tensor, Dict[str, LatentDistribution]]:
        noise = noise or {}
        current_arm, current_body = self.skeleton.split_pose(current_theta)

        arm_ctx = self.arm_context(phi, past_theta, past_translation, past_rotation)
        arm_dist = self.arm_encode(arm_ctx, current_arm)
        arm_hat = self.arm_decode(reparameterize(arm_dist, self.latent_noise(arm_dist, noise.get("arm"))), arm_ctx)

        body_ctx = self.body_context(phi, past_theta, past_translation, past_rotation, arm_hat)
        body_dist = self.body_encode(body_ctx, current_body)
        body_hat = self.body_decode(reparameterize(body_dist, self.latent_noise(body_dist, noise.get("body"))), body_ctx)

        return self.skeleton.merge_pose(arm_hat, body_hat), {"arm": arm_dist, "body": body_dist}

    def sample(
        self,
        phi: torch.Tensor,
        past_theta: torch.Tensor,
        past_translation: torch.Tensor,
        past_rotation: torch.Tensor,
        noise: Dict[str, torch.Tensor],
    ) -> torch.Tensor:
        arm_ctx = self.arm_context(phi, past_theta, past_translation, past_rotation)
        arm_hat = self.arm_decode(noise["arm"], arm_ctx)
        body_ctx = self.body_context(phi, past_theta, past_translation, past_rotation, arm_hat)
        body_hat = self.body_decode(noise["body"], body_ctx)
        return self.skeleton.merge_pose(arm_hat, body_hat)
