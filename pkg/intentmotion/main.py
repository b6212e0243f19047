import logging

import click

from config import config
from intentmotion.commands.evaluate import evaluate
from intentmotion.commands.export import export
from intentmotion.commands.generate_data import generate_data
from intentmotion.commands.optimize_object import optimize_object
from intentmotion.commands.synthesize import synthesize
from intentmotion.commands.train import train

LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR"]


def configure_logging(level: str):
    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format=config.LOG_FORMAT,
        handlers=[
            logging.FileHandler(config.LOG_FILE),
            logging.StreamHandler(),
        ],
        force=True,
    )


@click.group()
@click.option("--log-level", type=click.Choice(LOG_LEVELS, case_sensitive=False), default=config.LOG_LEVEL, show_default=True)
def cli(log_level):
    """Intent-driven full-body motion synthesis with hand-object interaction."""
    configure_logging(log_level)


cli.add_command(generate_data)
cli.add_command(train)
cli.add_command(synthesize)
cli.add_command(optimize_object)
cli.add_command(evaluate)
cli.add_command(export)


def main():
    cli()


if __name__ == "__main__":
    main()
