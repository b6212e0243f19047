from pydantic import BaseModel, Field, model_validator

from config import config


class GeneratorConfig(BaseModel):
    past_frames: int = Field(default=config.PAST_FRAMES, ge=1)
    sequence_frames: int = Field(default=config.SEQUENCE_FRAMES, ge=2)
    condition_dim: int = Field(default=config.CONDITION_DIM, gt=0)
    action_embedding_dim: int = Field(default=config.ACTION_EMBEDDING_DIM, gt=0)
    object_count: int = Field(default=config.OBJECT_COUNT, gt=0)
    shape_dim: int = Field(default=config.SHAPE_DIM, gt=0)
    arm_latent_dim: int = Field(default=config.ARM_LATENT_DIM, gt=0)
    body_latent_dim: int = Field(default=config.BODY_LATENT_DIM, gt=0)
    hidden_width: int = Field(default=512, gt=0)
    hidden_depth: int = Field(default=3, ge=1)
    attention_width: int = Field(default=16, gt=0)
    attention_heads: int = Field(default=4, gt=0)
    random_action_embeddings: bool = False
    action_embedding_seed: int = 0
    no_body_attention: bool = False
    fused_body: bool = False

    @model_validator(mode="after")
    def check_dims(self):
        if self.past_frames >= self.sequence_frames:
            raise ValueError("past_frames must be smaller than sequence_frames")
        if self.attention_width % self.attention_heads:
            raise ValueError("attention_width must be divisible by attention_heads")
        return self

    @property
    def synthesizer_type(self) -> str:
        return "fused" if self.fused_body else "decoupled"
