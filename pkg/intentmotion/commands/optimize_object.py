import logging
from pathlib import Path

import click

from intentmotion.commands.common import handle_errors, timestamp, write_run_manifest
from intentmotion.models.solver_config import SolverConfig
from intentmotion.models.train_config import config_hash
from intentmotion.services.dataset_service import dataset_hash, read_dataset, read_sequence, write_sequence
from intentmotion.services.object_optimizer import ObjectOptimizer
from intentmotion.utils.exceptions import NonConvergenceError
from intentmotion.utils.file_utils import write_json
from intentmotion.utils.validation import load_config_file

logger = logging.getLogger(__name__)


@click.command("optimize-object")
@click.option("--sequence", "sequence_path", type=click.Path(exists=True, dir_okay=False), required=True, help="Motion sequence JSON.")
@click.option("--data", type=click.Path(exists=True, file_okay=False), required=True, help="Dataset directory (skeleton and objects).")
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Output directory.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="Object solver config (JSON or TOML).")
@handle_errors
def optimize_object(sequence_path, data, out, config_path):
    """Re-solve a sequence's object poses from its frame-0 grasp."""
    started = timestamp()
    settings = load_config_file(config_path, SolverConfig) if config_path else SolverConfig()
    sequence = read_sequence(sequence_path)
    dataset = read_dataset(data)
    optimizer = ObjectOptimizer(dataset.skeleton, settings)
    solved, report = optimizer.optimize_sequence(sequence, dataset.library.vertices(sequence.object_label))

    out_dir = Path(out)
    artifacts = {
        "sequence": write_sequence(out_dir / "sequence.json", solved),
        "solver_report": write_json(out_dir / "solver_report.json", report.model_dump(mode="json")),
    }
    write_run_manifest(
        out_dir,
        "optimize-object",
        started,
        artifacts,
        config_hash=config_hash(settings),
        dataset_hash=dataset_hash(data),
        exit_code=0 if report.converged else NonConvergenceError.exit_code,
    )
    if not report.converged:
        raise NonConvergenceError(
            f"{sequence.sequence_id}: object solver did not converge on frames {report.unconverged_frames()}",
            frames=report.unconverged_frames(),
        )
    click.echo(f"Solved {len(report.frames)} frames of {sequence.sequence_id} into {out_dir}")
