from typing import Dict, List

from pydantic import BaseModel, Field, model_validator

from config import config


class ActionVocabulary(BaseModel):
    schema_version: str = config.SCHEMA_VERSION
    dim: int = Field(default=config.ACTION_EMBEDDING_DIM, gt=0)
    encoder: str = "hashed-trigram"
    embeddings: Dict[str, List[float]]

    @model_validator(mode="after")
    def check_embeddings(self):
        for word, vector in self.embeddings.items():
            if word in config.DISCARDED_INTENTS:
                raise ValueError(f"intent '{word}' is discarded and cannot appear in the vocabulary")
            if len(vector) != self.dim:
                raise ValueError(f"embedding for '{word}' has width {len(vector)}, expected {self.dim}")
        return self

    def actions(self) -> List[str]:
        return sorted(self.embeddings.keys())
