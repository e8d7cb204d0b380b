"""
Command for the finite-difference gradient suite
"""

import click
from rich.table import Table

from ..gradcheck import (
    NETWORK_THRESHOLD,
    PRIMITIVE_CHECKS,
    PRIMITIVE_POINTS,
    PRIMITIVE_THRESHOLD,
    run_suite,
)
from . import main_module as cli_main
from .main import BadConfig, CheckFailed, main


@main.command()
@click.option(
    "--threshold",
    type=float,
    default=PRIMITIVE_THRESHOLD,
    show_default=True,
    help="Largest relative error allowed for primitives",
)
@click.option(
    "--network-threshold",
    type=float,
    default=NETWORK_THRESHOLD,
    show_default=True,
    help="Largest relative error allowed for the critic and actor",
)
@click.option(
    "--points",
    type=int,
    default=PRIMITIVE_POINTS,
    show_default=True,
    help="Random inputs per primitive",
)
@click.option("--only", multiple=True, help="Check only the named primitive(s)")
def gradcheck(
    threshold: float, network_threshold: float, points: int, only: tuple[str, ...]
) -> None:
    """Compare every analytic gradient against central differences."""
    unknown = [name for name in only if name not in PRIMITIVE_CHECKS]
    if unknown:
        raise BadConfig(
            f"unknown primitive(s) {', '.join(unknown)}; "
            f"choose from {', '.join(PRIMITIVE_CHECKS)}"
        )
    if points < 1:
        raise BadConfig(f"--points must be at least 1, got {points}")

    with cli_main.console.status("Checking gradients..."):
        results = run_suite(
            primitive_threshold=threshold,
            network_threshold=network_threshold,
            points=points,
            names=list(only) or None,
        )

    table = Table(title="Gradient checks")
    table.add_column("Op", style="blue")
    table.add_column("Max rel. error", style="cyan")
    table.add_column("Threshold", style="cyan")
    table.add_column("Result")
    for result in results:
        table.add_row(
            result.name,
            f"{result.max_error:.2e}",
            f"{result.threshold:.0e}",
            "[green]pass[/green]" if result.passed else "[red]FAIL[/red]",
        )
    cli_main.console.print(table)

    failed = [r.name for r in results if not r.passed]
    if failed:
        raise CheckFailed(f"gradient check failed for: {', '.join(failed)}")
    cli_main.console.print(f"[green]All {len(results)} gradient checks passed[/green]")
