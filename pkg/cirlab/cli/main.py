"""
Main entry point for cirlab CLI
"""

import logging

import click
from rich.console import Console
from rich.logging import RichHandler


# Global instances
console = Console()


class CheckFailed(click.ClickException):
    """A theorem or gradient check missed its bound."""

    exit_code = 1


class BadConfig(click.ClickException):
    """The run configuration is invalid."""

    exit_code = 2


class NumericAbort(click.ClickException):
    """Training stopped on a non-finite value."""

    exit_code = 3


def _configure_logging(verbose: bool) -> None:
    """Route cirlab log records through rich."""
    logger = logging.getLogger("cirlab")
    for handler in list(logger.handlers):
        if isinstance(handler, RichHandler):
            logger.removeHandler(handler)
    logger.addHandler(RichHandler(console=console, show_path=False, markup=False))
    logger.setLevel(logging.INFO if verbose else logging.WARNING)


def _seed_list(first: int, count: int) -> list[int]:
    if count < 1:
        raise BadConfig(f"--seeds must be at least 1, got {count}")
    return list(range(first, first + count))


@click.group()
@click.version_option(package_name="cirlab")
@click.option("--verbose", "-v", is_flag=True, help="Show informational log messages")
def main(verbose: bool) -> None:
    """Constrained-initial-representation actor-critic and TD theory checks."""
    _configure_logging(verbose)
