from typing import Dict, List, Optional

from pydantic import BaseModel

from config import config


class FrameReport(BaseModel):
    frame: int
    hand: str
    e_d: float
    e_c: float
    e_r: float
    total: float
    iterations: int
    converged: bool


class SolverReport(BaseModel):
    schema_version: str = config.SCHEMA_VERSION
    sequence_id: str
    tau: float
    weights: Dict[str, float]
    max_iters: int
    frames: List[FrameReport]
    switch_frame: Optional[int] = None
    switch_fallback: bool = False

    @property
    def converged(self) -> bool:
        return all(frame.converged for frame in self.frames)

    def unconverged_frames(self) -> List[int]:
        return [frame.frame for frame in self.frames if not frame.converged]
