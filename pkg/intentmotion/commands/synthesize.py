import logging
from pathlib import Path

import click

from config import config
from intentmotion.commands.common import handle_errors, timestamp, write_run_manifest
from intentmotion.models.solver_config import SolverConfig
from intentmotion.services.checkpoint_service import load_checkpoint, restore_synthesizer
from intentmotion.services.dataset_service import dataset_hash, load_split, read_dataset, write_sequence
from intentmotion.services.object_optimizer import ObjectOptimizer
from intentmotion.synthesizers.base_synthesizer import OBJECT_MODES
from intentmotion.utils.exceptions import IntentMotionError, NonConvergenceError
from intentmotion.utils.file_utils import write_json
from intentmotion.utils.validation import load_config_file

logger = logging.getLogger(__name__)


@click.command("synthesize")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), required=True, help="Trained checkpoint.")
@click.option("--action", required=True, help="Action word from the vocabulary.")
@click.option("--object", "object_label", type=click.IntRange(0, config.OBJECT_COUNT - 1), required=True, help="Object label.")
@click.option("--seed", type=int, default=0, show_default=True, help="Sampling seed.")
@click.option("--data", type=click.Path(exists=True, file_okay=False), required=True, help="Dataset directory.")
@click.option("--seed-sequence", help="Sequence id providing the seed frames (default: first test sequence).")
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Output directory.")
@click.option("--object-mode", type=click.Choice(OBJECT_MODES), default="optimize", show_default=True)
@click.option("--solver-config", type=click.Path(exists=True, dir_okay=False), help="Object solver config (JSON or TOML).")
@handle_errors
def synthesize(checkpoint, action, object_label, seed, data, seed_sequence, out, object_mode, solver_config):
    """Roll out a motion for an action and object."""
    started = timestamp()
    if not config.is_intent_supported(action):
        raise IntentMotionError(f"Action '{action}' is not supported")

    state = load_checkpoint(checkpoint)
    model = restore_synthesizer(state)
    dataset = read_dataset(data)
    if seed_sequence:
        try:
            source = dataset.by_id(seed_sequence)
        except KeyError as e:
            raise IntentMotionError(str(e))
    else:
        test = load_split(dataset, state.config.val_subject, state.config.test_subject).test
        if not test:
            raise IntentMotionError("Dataset has no test sequences to seed from")
        source = test[0]

    settings = load_config_file(solver_config, SolverConfig) if solver_config else SolverConfig()
    optimizer = ObjectOptimizer(model.skeleton, settings)
    sequence, report = model.rollout(
        source,
        action,
        object_label,
        seed,
        dataset.library.vertices(object_label),
        object_mode=object_mode,
        optimizer=optimizer,
        provenance={"checkpoint": Path(checkpoint).name, "config_hash": state.config_hash},
    )

    out_dir = Path(out)
    artifacts = {"sequence": write_sequence(out_dir / "sequence.json", sequence)}
    if report is not None:
        artifacts["solver_report"] = write_json(out_dir / "solver_report.json", report.model_dump(mode="json"))
    converged = report is None or report.converged
    write_run_manifest(
        out_dir,
        "synthesize",
        started,
        artifacts,
        config_hash=state.config_hash,
        dataset_hash=dataset_hash(data),
        seed=seed,
        exit_code=0 if converged else NonConvergenceError.exit_code,
    )
    if not converged:
        raise NonConvergenceError(
            f"{sequence.sequence_id}: object solver did not converge on frames {report.unconverged_frames()}",
            frames=report.unconverged_frames(),
        )
    click.echo(f"Wrote {sequence.sequence_id} to {out_dir}")
