import hashlib
import json
import logging
from pathlib import Path
from typing import Any, List, Optional

from intentmotion.utils.exceptions import ArtifactIOError

logger = logging.getLogger(__name__)


def ensure_directory(path) -> Path:
    try:
        directory = Path(path)
        directory.mkdir(parents=True, exist_ok=True)
        return directory
    except OSError as e:
        logger.error(f"Error creating directory {path}: {e}")
        raise ArtifactIOError(f"Cannot create directory {path}: {e}", path=str(path))


def dump_json(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def write_json(path, data: Any) -> Path:
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", encoding="utf-8") as f:
            f.write(dump_json(data))
        return target
    except (OSError, TypeError, ValueError) as e:
        logger.error(f"Error writing {target}: {e}")
        raise ArtifactIOError(f"Cannot write {target}: {e}", path=str(target))


def read_json(path) -> Any:
    source = Path(path)
    try:
        with open(source, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        logger.error(f"Missing artifact: {source}")
        raise ArtifactIOError(f"File not found: {source}", path=str(source))
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Error reading {source}: {e}")
        raise ArtifactIOError(f"Cannot read {source}: {e}", path=str(source))


def get_files_in_directory(path, extensions: Optional[List[str]] = None) -> List[Path]:
    root = Path(path)
    if not root.is_dir():
        raise ArtifactIOError(f"Not a directory: {root}", path=str(root))
    files = [p for p in sorted(root.rglob("*")) if p.is_file()]
    if extensions:
        files = [p for p in files if any(p.name.lower().endswith(ext.lower()) for ext in extensions)]
    return files


def hash_file(path) -> str:
    digest = hashlib.sha256()
    try:
        with open(path, "rb") as f:
            for chunk in iter(lambda: f.read(1 << 16), b""):
                digest.update(chunk)
    except OSError as e:
        logger.error(f"Error hashing {path}: {e}")
        raise ArtifactIOError(f"Cannot hash {path}: {e}", path=str(path))
    return digest.hexdigest()


def hash_directory(path, exclude: Optional[List[str]] = None) -> str:
    """SHA-256 over relative paths and contents of every file under `path`."""
    root = Path(path)
    skipped = set(exclude or [])
    digest = hashlib.sha256()
    for file in get_files_in_directory(root):
        relative = file.relative_to(root).as_posix()
        if relative in skipped or file.name in skipped:
            continue
        digest.update(relative.encode("utf-8"))
        digest.update(hash_file(file).encode("ascii"))
    return digest.hexdigest()
