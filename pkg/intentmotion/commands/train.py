import logging

import click

from intentmotion.commands.common import handle_errors, timestamp, write_run_manifest
from intentmotion.models.train_config import TrainConfig
from intentmotion.services.dataset_service import dataset_hash, read_dataset
from intentmotion.services.training_service import TrainingService
from intentmotion.utils.validation import load_config_file

logger = logging.getLogger(__name__)

ABLATIONS = {
    "random-action-embeddings": "random_action_embeddings",
    "no-body-attention": "no_body_attention",
    "fused-body": "fused_body",
}


def resolve_train_config(config_path, full_hparams: bool, ablations, epochs, seed) -> TrainConfig:
    base = load_config_file(config_path, TrainConfig) if config_path else TrainConfig()
    overrides = {}
    if full_hparams:
        overrides.update(TrainConfig.full_preset().model_dump(include={"epochs"}))
    if epochs is not None:
        overrides["epochs"] = epochs
    if seed is not None:
        overrides["seed"] = seed
    if ablations:
        generator = base.generator.model_copy(update={ABLATIONS[name]: True for name in ablations})
        overrides["generator"] = generator.model_dump()
    return TrainConfig.model_validate({**base.model_dump(), **overrides})


@click.command("train")
@click.option("--data", type=click.Path(exists=True, file_okay=False), required=True, help="Dataset directory.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="Train config (JSON or TOML).")
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Output directory for checkpoints and the loss log.")
@click.option("--paper-hparams", "--full-hparams", "full_hparams", is_flag=True, help="Use the full-length preset (1600 epochs).")
@click.option("--ablation", type=click.Choice(sorted(ABLATIONS)), multiple=True, help="Enable an ablation switch.")
@click.option("--epochs", type=click.IntRange(min=1), help="Override the epoch count.")
@click.option("--seed", type=int, help="Override the training seed.")
@handle_errors
def train(data, config_path, out, full_hparams, ablation, epochs, seed):
    """Train a motion synthesizer."""
    started = timestamp()
    train_config = resolve_train_config(config_path, full_hparams, ablation, epochs, seed)
    dataset = read_dataset(data)
    service = TrainingService(train_config, out)
    result = service.train(dataset)

    write_run_manifest(
        out,
        "train",
        started,
        result.artifacts,
        config_hash=result.config_hash,
        dataset_hash=dataset_hash(data),
        seed=train_config.seed,
    )
    click.echo(f"Best validation loss {result.best_val_loss:.6f} at epoch {result.best_epoch}; checkpoints in {out}")
