from typing import Any, Dict, Optional

from pydantic import BaseModel

from config import config


class RunManifest(BaseModel):
    schema_version: str = config.SCHEMA_VERSION
    command: str
    config_hash: Optional[str] = None
    dataset_hash: Optional[str] = None
    seed: Optional[int] = None
    started_at: str
    finished_at: str
    exit_code: int = 0
    artifacts: Dict[str, str]
    host: Dict[str, Any]
