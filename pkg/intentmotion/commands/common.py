import functools
import logging
import platform
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Optional

import click
import psutil
import torch

from intentmotion.models.run_manifest import RunManifest
from intentmotion.utils.exceptions import IntentMotionError, NonConvergenceError, SchemaViolationError
from intentmotion.utils.file_utils import write_json

logger = logging.getLogger(__name__)

MANIFEST_NAME = "run_manifest.json"


def timestamp() -> str:
    return datetime.now(timezone.utc).isoformat()


def host_info() -> Dict[str, object]:
    memory = psutil.virtual_memory()
    return {
        "platform": platform.platform(),
        "python": platform.python_version(),
        "torch": torch.__version__,
        "cpu_count": psutil.cpu_count(logical=True),
        "memory_total": memory.total,
        "memory_percent": memory.percent,
    }


def write_run_manifest(
    out_dir,
    command: str,
    started_at: str,
    artifacts: Dict[str, object],
    config_hash: Optional[str] = None,
    dataset_hash: Optional[str] = None,
    seed: Optional[int] = None,
    exit_code: int = 0,
) -> Path:
    manifest = RunManifest(
        command=command,
        config_hash=config_hash,
        dataset_hash=dataset_hash,
        seed=seed,
        started_at=started_at,
        finished_at=timestamp(),
        exit_code=exit_code,
        artifacts={name: str(path) for name, path in sorted(artifacts.items())},
        host=host_info(),
    )
    path = write_json(Path(out_dir) / MANIFEST_NAME, manifest.model_dump(mode="json"))
    logger.info(f"{command}: wrote run manifest {path}")
    return path


def handle_errors(fn):
    """Map domain errors onto process exit codes; click's own usage errors pass through."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        ctx = click.get_current_context()
        try:
            return fn(*args, **kwargs)
        except (click.exceptions.ClickException, click.exceptions.Exit, click.exceptions.Abort):
            raise
        except NonConvergenceError as e:
            logger.warning(f"{ctx.command.name}: {e.message}")
            click.echo(f"Not converged: {e.message}", err=True)
            ctx.exit(e.exit_code)
        except SchemaViolationError as e:
            logger.error(f"{ctx.command.name}: schema violation at {e.pointer or '/'} in {e.path}: {e.message}")
            click.echo(f"Schema violation at {e.pointer or '/'} ({e.path}): {e.message}", err=True)
            ctx.exit(e.exit_code)
        except IntentMotionError as e:
            logger.error(f"{ctx.command.name}: {e.message}")
            click.echo(f"Error: {e.message}", err=True)
            ctx.exit(e.exit_code)
        except Exception as e:
            logger.exception(f"Global exception in {ctx.command.name}: {e}")
            click.echo(f"Internal error: {e}", err=True)
            ctx.exit(1)

    return wrapper
