"""
Commands for the numeric theory checks
"""

from pathlib import Path

import click
from rich.table import Table

from ..models import CheckOutcome, TheoremReport
from ..storage import write_json
from ..theorems import THEOREMS, TheoryParams, run_checks
from . import main_module as cli_main
from .main import BadConfig, CheckFailed, _seed_list, main


def _check_row(report: TheoremReport, check: CheckOutcome | None) -> list[str]:
    if check is None:
        return [report.theorem, str(report.seed), "-", "-", "-", "-", "[red]error[/red]"]
    if not check.asserted:
        verdict = "[dim]reported[/dim]"
    elif check.passed:
        verdict = "[green]pass[/green]"
    else:
        verdict = "[red]FAIL[/red]"
    return [
        report.theorem,
        str(report.seed),
        check.name,
        f"{check.observed:.3g}",
        f"{'<=' if check.upper else '>='} {check.bound:.3g}",
        f"{check.margin:.3g}",
        verdict,
    ]


@main.command()
@click.argument("which", type=click.Choice(["all", *THEOREMS]), default="all")
@click.option("--seeds", "n_seeds", type=int, default=1, help="Number of seeds per check")
@click.option("--seed", "first_seed", type=int, default=0, help="First seed")
@click.option("--c", type=float, help="Feature scale c in W = c·I")
@click.option("--lambda", "lam", type=float, help="Convex target weight (t5) or regulariser (t4)")
@click.option("--gamma", type=float, help="Discount factor")
@click.option("--steps", type=int, help="Iterations or samples per check")
@click.option("--trials", type=int, help="Random instances per seed (t1, t3)")
@click.option("--sweep", is_flag=True, help="Add a c sweep to t1 (reported only)")
@click.option("--details", is_flag=True, help="List every measured quantity")
@click.option("--workers", type=int, default=1, help="Parallel worker processes")
@click.option(
    "--out",
    "out_dir",
    type=click.Path(path_type=Path, file_okay=False),
    default=Path("reports"),
    show_default=True,
    help="Directory for JSON reports",
)
def theory(
    which: str,
    n_seeds: int,
    first_seed: int,
    c: float | None,
    lam: float | None,
    gamma: float | None,
    steps: int | None,
    trials: int | None,
    sweep: bool,
    details: bool,
    workers: int,
    out_dir: Path,
) -> None:
    """Check the tanh-feature TD results numerically.

    WHICH selects t1 (rank preservation), t2 (variance bounds), t3 (projected
    TD convergence), t4 (linear rate), t5 (tabular convergence) or all.

    Examples:

      cirlab theory t5 --lambda 0.3 --seeds 5

      cirlab theory t1 --c 0.01
    """
    theorems = THEOREMS if which == "all" else (which,)
    params = TheoryParams(c=c, lam=lam, gamma=gamma, steps=steps, trials=trials, sweep=sweep)
    seeds = _seed_list(first_seed, n_seeds)
    try:
        with cli_main.console.status(f"Running {', '.join(theorems)}..."):
            reports = run_checks(theorems, seeds, params, workers=max(1, workers))
    except ValueError as e:
        raise BadConfig(str(e))

    paths = {}
    for report in reports:
        paths[report.name] = out_dir / f"{report.name}.json"
        write_json(paths[report.name], report.to_dict())

    table = Table(title="Theory checks")
    for column in ("Theorem", "Seed", "Check", "Observed", "Bound", "Margin"):
        table.add_column(column, style="cyan" if column != "Theorem" else "blue")
    table.add_column("Result")
    for report in reports:
        rows = report.checks if details else [report.primary]
        for check in rows:
            table.add_row(*_check_row(report, check))
    cli_main.console.print(table)

    failing = [r for r in reports if not r.passed]
    passed = len(reports) - len(failing)
    cli_main.console.print(f"{passed}/{len(reports)} report(s) passed; written to {out_dir}")
    if failing:
        for report in failing:
            reason = report.error or ", ".join(report.failures)
            cli_main.console.print(f"[red]{report.name}:[/red] {reason} ({paths[report.name]})")
        raise CheckFailed(f"{len(failing)} report(s) failed; see {paths[failing[0].name]}")
