import logging
from typing import Dict, Optional, Tuple

import torch

from intentmotion.kinematics.skeleton import Skeleton
from intentmotion.models.action_vocabulary import ActionVocabulary
from intentmotion.models.generator_config import GeneratorConfig
from intentmotion.networks.layers import LatentDistribution, reparameterize
from intentmotion.synthesizers.base_synthesizer import BaseSynthesizer

logger = logging.getLogger(__name__)


class FusedSynthesizer(BaseSynthesizer):
    """One CVAE for all joints, without the arm/body split."""

    synthesizer_type = "fused"

    def __init__(self, generator_config: GeneratorConfig, skeleton: Skeleton, vocabulary: ActionVocabulary):
        super().__init__(generator_config, skeleton, vocabulary)
        k = generator_config.past_frames
        self.pose_width = skeleton.joint_count * 6
        self.latent_dim = generator_config.arm_latent_dim + generator_config.body_latent_dim
        feature_width = 0 if generator_config.no_body_attention else skeleton.joint_count * generator_config.attention_width * k

        self.context_width = generator_config.condition_dim + self.pose_width * k + feature_width + 12 * k
        self.encoder = self.mlp(self.context_width + self.pose_width, 2 * self.latent_dim)
        self.decoder = self.mlp(self.latent_dim + self.context_width, self.pose_width)

    def latent_dims(self) -> Dict[str, int]:
        return {"full": self.latent_dim}

    def context(self, phi, past_theta, past_translation, past_rotation) -> torch.Tensor:
        parts = [phi, past_theta.flatten(1)]
        if not self.config.no_body_attention:
            parts.append(self.attend_body(past_theta).flatten(1))
        parts.append(self.object_context(past_translation, past_rotation))
        return torch.cat(parts, dim=-1)

    def decode(self, z: torch.Tensor, ctx: torch.Tensor) -> torch.Tensor:
        return self.to_rotations(self.decoder(torch.cat([z, ctx], dim=-1)), self.joint_count)

    def reconstruct(
        self,
        phi: torch.Tensor,
        past_theta: torch.Tensor,
        past_translation: torch.Tensor,
        past_rotation: torch.Tensor,
        current_theta: torch.Tensor,
        noise: Optional[Dict[str, torch.Tensor]] = None,
    ) -> Tuple[torch.Tensor, Dict[str, LatentDistribution]]:
        ctx = self.context(phi, past_theta, past_translation, past_rotation)
        dist = LatentDistribution.from_params(self.encoder(torch.cat([ctx, current_theta.flatten(1)], dim=-1)))
        z = reparameterize(dist, self.latent_noise(dist, (noise or {}).get("full")))
        return self.decode(z, ctx), {"full": dist}

    def sample(
        self,
        phi: torch.Tensor,
        past_theta: torch.Tensor,
        past_translation: torch.Tensor,
        past_rotation: torch.Tensor,
        noise: Dict[str, torch.Tensor],
    ) -> torch.Tensor:
        return self.decode(noise["full"], self.context(phi, past_theta, past_translation, past_rotation))
