import logging

import click

from intentmotion.commands.common import handle_errors, timestamp, write_run_manifest
from intentmotion.services.dataset_service import dataset_hash, generate_synthetic, load_split, write_dataset

logger = logging.getLogger(__name__)


@click.command("generate-data")
@click.option("--seed", type=int, default=0, show_default=True, help="Dataset seed.")
@click.option("--subjects", type=click.IntRange(min=2), default=10, show_default=True, help="Number of subjects S1..Sn.")
@click.option("--sequences", type=click.IntRange(min=2), default=400, show_default=True, help="Number of sequences.")
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Dataset directory to write.")
@handle_errors
def generate_data(seed, subjects, sequences, out):
    """Generate the synthetic interaction dataset."""
    started = timestamp()
    if sequences < subjects:
        raise click.BadParameter(f"--sequences ({sequences}) must be at least --subjects ({subjects})", param_hint="--sequences")

    dataset = generate_synthetic(seed, subjects, sequences)
    root = write_dataset(dataset, out)
    counts = load_split(dataset).counts()
    logger.info(f"Dataset split sizes: {counts}")
    digest = dataset_hash(root)
    write_run_manifest(
        root,
        "generate-data",
        started,
        {"dataset": root, "manifest": root / "manifest.json"},
        dataset_hash=digest,
        seed=seed,
    )
    click.echo(f"Wrote {len(dataset.sequences)} sequences to {root} (dataset hash {digest[:12]}, split {counts})")
