"""
Commands for training runs and architecture ablations
"""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import click
from rich.table import Table

from ..algorithm import EnvironmentFault, TrainingAborted, run_training
from ..config import ConfigError, TrainConfig, load_config
from ..envs import ENVIRONMENTS
from ..models import CurvePoint, RunManifest, RunSummary
from ..networks import ACTIVATIONS, INIT_SCHEMES, INPUT_NORMS, SKIP_MODES
from ..storage import save_checkpoint, write_curve_csv, write_json
from . import main_module as cli_main
from .main import BadConfig, NumericAbort, _seed_list, main


@dataclass
class SeedOutcome:
    """What one seed's run produced; carried back from worker processes."""

    seed: int
    summary: RunSummary | None = None
    error: str | None = None
    numeric: bool = False


def run_seed(cfg: TrainConfig, out_dir: Path) -> SeedOutcome:
    """Train one seed and write its artifacts under `out_dir/seed-<k>/`."""
    seed_dir = out_dir / f"seed-{cfg.seed}"
    paths = {
        "curve": seed_dir / "curve.csv",
        "summary": seed_dir / "summary.json",
        "checkpoint": seed_dir / "checkpoint.json",
        "manifest": seed_dir / "manifest.json",
    }
    manifest = RunManifest(
        config=cfg.to_dict(),
        seed=cfg.seed,
        config_hash=cfg.content_hash(),
        outputs={name: str(path) for name, path in paths.items()},
    )
    write_json(paths["manifest"], manifest.to_dict())

    def on_eval(curve: list[CurvePoint]) -> None:
        write_curve_csv(paths["curve"], curve)

    started = time.perf_counter()
    try:
        result = run_training(cfg, on_eval=on_eval)
    except TrainingAborted as e:
        return SeedOutcome(seed=cfg.seed, error=str(e), numeric=True)
    except EnvironmentFault as e:
        return SeedOutcome(seed=cfg.seed, error=str(e))

    summary = RunSummary(
        seed=cfg.seed,
        config=cfg.to_dict(),
        final_return=result.final_return,
        wall_time=time.perf_counter() - started,
        env_steps=result.state.env_steps,
        clamp_count=result.clamp_count,
    )
    save_checkpoint(paths["checkpoint"], result.state.named_tensors())
    write_json(paths["summary"], summary.to_dict())
    manifest.finish()
    write_json(paths["manifest"], manifest.to_dict())
    return SeedOutcome(seed=cfg.seed, summary=summary)


def _run_job(job: tuple[TrainConfig, Path]) -> SeedOutcome:
    return run_seed(*job)


def _resolve_lambda(convex_lambda: float | None, avg_q: bool, cdq: bool) -> float | None:
    flags = {"--lambda": convex_lambda is not None, "--avg-q": avg_q, "--cdq": cdq}
    chosen = [name for name, given in flags.items() if given]
    if len(chosen) > 1:
        raise BadConfig(f"{' and '.join(chosen)} are mutually exclusive")
    if avg_q:
        return 0.5
    if cdq:
        return 1.0
    return convex_lambda


def _build_config(config_path: Path | None, overrides: dict[str, Any]) -> TrainConfig:
    try:
        if config_path is not None:
            cfg = load_config(config_path, **overrides)
        else:
            cfg = TrainConfig().with_overrides(**overrides)
        return cfg.check()
    except ConfigError as e:
        for error in e.errors:
            cli_main.console.print(f"[red]config error:[/red] {error}")
        raise BadConfig(f"invalid configuration ({len(e.errors)} problem(s))")


@main.command()
@click.option(
    "--config",
    "config_path",
    type=click.Path(path_type=Path, dir_okay=False),
    help="Flat TOML config file; flags override its values",
)
@click.option("--env", type=click.Choice(sorted(ENVIRONMENTS)), help="Environment")
@click.option("--steps", type=int, help="Environment steps per seed")
@click.option("--seed", type=int, help="First seed")
@click.option("--seeds", "n_seeds", type=int, default=1, help="Number of consecutive seeds")
@click.option("--workers", type=int, default=1, help="Parallel seed workers")
@click.option("--smr", type=int, help="Sample-multiple-reuse iterations per batch")
@click.option("--lambda", "convex_lambda", type=float, help="Convex target weight on the min")
@click.option("--avg-q", is_flag=True, help="Average both critics (lambda = 0.5)")
@click.option("--cdq", is_flag=True, help="Clipped double Q (lambda = 1.0)")
@click.option("--c", "rnorm_c", type=float, help="AvgRNorm scale")
@click.option("--gamma", type=float, help="Discount factor")
@click.option("--hidden", "critic_hidden", type=int, help="Critic width")
@click.option("--depth", "critic_depth", type=int, help="Critic down/up block pairs")
@click.option("--activation", type=click.Choice(ACTIVATIONS), help="Initial-representation bound")
@click.option("--input-norm", type=click.Choice(INPUT_NORMS), help="Initial normalisation")
@click.option("--skip", type=click.Choice(SKIP_MODES), help="Skip-connection layout")
@click.option("--no-tanh", is_flag=True, help="Drop the bounding activation")
@click.option("--no-ln", is_flag=True, help="Drop every critic LayerNorm")
@click.option("--no-skip", is_flag=True, help="Drop skip connections")
@click.option("--no-ent", is_flag=True, help="Drop the entropy term from the target")
@click.option("--no-input-layernorm", is_flag=True, help="Drop only the initial LayerNorm")
@click.option("--all-avg-rnorm", is_flag=True, help="AvgRNorm after every critic LayerNorm")
@click.option("--init", type=click.Choice(INIT_SCHEMES), help="Weight initialisation")
@click.option(
    "--freeze-target-action",
    is_flag=True,
    help="Reuse the next-state action across SMR iterations",
)
@click.option("--batch-size", type=int, help="Minibatch size")
@click.option("--warmup", "warmup_steps", type=int, help="Uniform-action warmup steps")
@click.option("--eval-interval", type=int, help="Environment steps between evaluations")
@click.option(
    "--out",
    "out_dir",
    type=click.Path(path_type=Path, file_okay=False),
    default=Path("runs"),
    show_default=True,
    help="Output directory",
)
def train(
    config_path: Path | None,
    n_seeds: int,
    workers: int,
    avg_q: bool,
    cdq: bool,
    no_tanh: bool,
    no_ln: bool,
    no_skip: bool,
    no_ent: bool,
    no_input_layernorm: bool,
    all_avg_rnorm: bool,
    freeze_target_action: bool,
    out_dir: Path,
    convex_lambda: float | None,
    activation: str | None,
    skip: str | None,
    **overrides: Any,
) -> None:
    """Train the agent on a toy task and write curve, summary and checkpoint.

    Examples:

      cirlab train --env pendulum --steps 50000 --seed 1

      cirlab train --env pendulum --smr 1 --lambda 1.0 --no-tanh --no-ln --no-skip

      cirlab train --env pendulum --no-input-layernorm --init orthogonal
    """
    if no_tanh and activation not in (None, "none"):
        raise BadConfig("--no-tanh conflicts with --activation " + activation)
    if no_skip and skip not in (None, "none"):
        raise BadConfig("--no-skip conflicts with --skip " + skip)
    if workers < 1:
        raise BadConfig(f"--workers must be at least 1, got {workers}")
    overrides.update(
        convex_lambda=_resolve_lambda(convex_lambda, avg_q, cdq),
        activation="none" if no_tanh else activation,
        skip="none" if no_skip else skip,
        layernorm=False if no_ln else None,
        entropy_in_target=False if no_ent else None,
        input_layernorm=False if no_input_layernorm else None,
        all_avg_rnorm=True if all_avg_rnorm else None,
        resample_target_action=False if freeze_target_action else None,
    )
    cfg = _build_config(config_path, overrides)
    seeds = _seed_list(cfg.seed, n_seeds)
    jobs = [(cfg.with_overrides(seed=seed), out_dir) for seed in seeds]

    with cli_main.console.status(f"Training {cfg.env} on {len(jobs)} seed(s)..."):
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
                outcomes = list(pool.map(_run_job, jobs))
        else:
            outcomes = [_run_job(job) for job in jobs]

    table = Table(title=f"Training: {cfg.env}")
    table.add_column("Seed", style="blue")
    table.add_column("Final return", style="cyan")
    table.add_column("Steps", style="cyan")
    table.add_column("Wall time", style="cyan")
    table.add_column("Status")
    for outcome in outcomes:
        if outcome.summary is not None:
            s = outcome.summary
            table.add_row(
                str(s.seed),
                f"{s.final_return:.2f}",
                str(s.env_steps),
                f"{s.wall_time:.1f}s",
                "[green]ok[/green]",
            )
        else:
            table.add_row(str(outcome.seed), "-", "-", "-", "[red]aborted[/red]")
    cli_main.console.print(table)
    cli_main.console.print(f"Artifacts written to {out_dir}")

    failed = [o for o in outcomes if o.error is not None]
    for outcome in failed:
        cli_main.console.print(f"[red]seed {outcome.seed}:[/red] {outcome.error}")
    if any(o.numeric for o in failed):
        raise NumericAbort("training aborted on a non-finite value")
    if failed:
        raise click.ClickException("training failed")
