from typing import Dict, List, Tuple

from pydantic import BaseModel, Field, model_validator

from config import config


class DatasetManifest(BaseModel):
    schema_version: str = config.SCHEMA_VERSION
    seed: int
    n_subjects: int = Field(gt=0)
    n_sequences: int = Field(gt=0)
    subjects: Dict[str, List[str]]
    val_subject: str
    test_subject: str
    held_out_pair: Tuple[str, int]
    actions: List[str]
    object_count: int = config.OBJECT_COUNT
    sequence_frames: int = config.SEQUENCE_FRAMES
    raw_fps: float = config.RAW_FPS
    contact_threshold: float = config.CONTACT_THRESHOLD

    @model_validator(mode="after")
    def check_subjects(self):
        for subject in (self.val_subject, self.test_subject):
            if subject not in self.subjects:
                raise ValueError(f"split subject {subject} is not in the dataset")
        if sum(len(ids) for ids in self.subjects.values()) != self.n_sequences:
            raise ValueError("subject sequence lists do not add up to n_sequences")
        return self
