import logging

import click

from intentmotion.commands.common import handle_errors, timestamp, write_run_manifest
from intentmotion.models.evaluation_config import EvaluationConfig
from intentmotion.services.dataset_service import dataset_hash, read_dataset
from intentmotion.services.evaluation_service import EvaluationService
from intentmotion.synthesizers.base_synthesizer import OBJECT_MODES
from intentmotion.utils.validation import load_config_file

logger = logging.getLogger(__name__)


@click.command("evaluate")
@click.option("--data", type=click.Path(exists=True, file_okay=False), required=True, help="Dataset directory.")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), help="Checkpoint; ground truth is scored when omitted.")
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Output directory for the metrics report.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="Evaluation config (JSON or TOML).")
@click.option("--object-mode", type=click.Choice(OBJECT_MODES), help="Object handling during rollouts.")
@click.option("--repeats", type=click.IntRange(min=1), help="Number of repeats.")
@click.option("--seed", type=int, help="Base seed.")
@handle_errors
def evaluate(data, checkpoint, out, config_path, object_mode, repeats, seed):
    """Score generated (or ground-truth) test motions."""
    started = timestamp()
    settings = load_config_file(config_path, EvaluationConfig) if config_path else EvaluationConfig()
    overrides = {name: value for name, value in (("object_mode", object_mode), ("repeats", repeats), ("seed", seed)) if value is not None}
    settings = EvaluationConfig.model_validate({**settings.model_dump(), **overrides})

    dataset = read_dataset(data)
    digest = dataset_hash(data)
    service = EvaluationService(dataset, settings)
    report = service.evaluate(digest, checkpoint)
    artifacts = service.write_report(report, out)

    write_run_manifest(out, "evaluate", started, artifacts, config_hash=report.config_hash, dataset_hash=digest, seed=settings.seed)
    for name, summary in report.metrics.items():
        click.echo(f"{name}: {summary.mean:.6f} +/- {summary.ci:.6f}")
