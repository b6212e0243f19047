import logging
from pathlib import Path

import click

from config import config
from intentmotion.commands.common import handle_errors, timestamp, write_run_manifest
from intentmotion.kinematics.skeleton import Skeleton
from intentmotion.models.skeleton_template import SkeletonTemplate
from intentmotion.services.dataset_service import read_sequence
from intentmotion.services.export_service import EXPORT_FORMATS, ExportService
from intentmotion.utils.validation import load_document

logger = logging.getLogger(__name__)


@click.command("export")
@click.option("--sequence", "sequence_path", type=click.Path(exists=True, dir_okay=False), required=True, help="Motion sequence JSON.")
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Output directory.")
@click.option("--format", "fmt", type=click.Choice(EXPORT_FORMATS), default="json", show_default=True)
@click.option("--fps", "frames", type=click.IntRange(min=2), default=config.EXPORT_FRAMES, show_default=True, help="Output frames per sequence.")
@click.option("--data", type=click.Path(exists=True, file_okay=False), help="Dataset directory whose skeleton to use.")
@handle_errors
def export(sequence_path, out, fmt, frames, data):
    """Upsample a sequence and write an animation file."""
    started = timestamp()
    sequence = read_sequence(sequence_path)
    skeleton = Skeleton(load_document(Path(data) / "skeleton.json", SkeletonTemplate)) if data else Skeleton.default()
    target = ExportService(skeleton).export(sequence, Path(out) / f"{sequence.sequence_id}.{fmt}", fmt, frames)
    write_run_manifest(out, "export", started, {"animation": target})
    click.echo(f"Exported {sequence.sequence_id} to {target}")
