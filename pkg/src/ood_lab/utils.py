import json
import logging
from pathlib import Path
from typing import List, Optional, Sequence

import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from .core.config import ExperimentConfig, default_out_dir, load_config, with_overrides
from .core.errors import ConfigurationError
from .core.models import RunMetrics
from .core.presets import DEFAULT_FAMILY, OBJECTIVE_KEYS, get_preset

console = Console()
err_console = Console(stderr=True)


def setup_logging(verbose: bool = False):
    """Route library logging through Rich on stderr."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=err_console, rich_tracebacks=True, show_path=verbose)],
        force=True,
    )


def error_record(error: BaseException, command: str) -> str:
    return json.dumps(
        {"error": type(error).__name__, "message": str(error), "command": command}
    )


def fail(error: BaseException, command: str):
    """Print the error for humans and as a JSON record on stderr, then exit nonzero."""
    console.print(f"❌ Error: {error}", style="red")
    typer.echo(error_record(error, command), err=True)
    raise typer.Exit(code=2 if isinstance(error, ConfigurationError) else 1)


def goodbye():
    console.print("\n👋 Goodbye!", style="yellow")
    raise typer.Exit(code=0)


def resolve_out(out: Optional[Path]) -> Path:
    return out if out is not None else default_out_dir()


def resolve_config(
    config_path: Optional[Path],
    preset: Optional[str],
    seed: Optional[int] = None,
    runs: Optional[int] = None,
) -> ExperimentConfig:
    """Experiment from exactly one of --config / --preset, with --seed / --runs applied."""
    if config_path is not None and preset is not None:
        raise ConfigurationError("pass either --config or --preset, not both")
    if config_path is not None:
        config = load_config(config_path)
    elif preset is not None:
        config = get_preset(preset)
    else:
        raise ConfigurationError("pass --config <file> or --preset <name> (see `ood-lab presets`)")
    return with_overrides(config, seed=seed, runs=runs)


def resolve_configs(
    config_paths: Optional[Sequence[Path]],
    presets: Optional[Sequence[str]],
    family: Optional[str],
    seed: Optional[int] = None,
    runs: Optional[int] = None,
) -> List[ExperimentConfig]:
    """Experiments for a comparison; defaults to the four objectives of one preset family."""
    configs = [load_config(path) for path in config_paths or []]
    configs += [get_preset(name) for name in presets or []]
    if not configs:
        family = family or DEFAULT_FAMILY
        configs = [get_preset(f"{family}/{key}") for key in OBJECTIVE_KEYS]
    elif family is not None:
        raise ConfigurationError("--family cannot be combined with --config or --preset")
    return [with_overrides(config, seed=seed, runs=runs) for config in configs]


def metrics_table(title: str, runs: Sequence[RunMetrics]) -> Table:
    table = Table(title=title, show_header=True, header_style="bold blue")
    table.add_column("Experiment", style="green")
    table.add_column("Run", style="cyan", width=5)
    table.add_column("Seed", style="cyan", width=8)
    table.add_column("Scorer", style="magenta", width=8)
    table.add_column("ID Acc", style="yellow", justify="right")
    table.add_column("Near AUROC", style="yellow", justify="right")
    table.add_column("Far AUROC", style="yellow", justify="right")
    for run in runs:
        table.add_row(
            run.experiment,
            str(run.run_index),
            str(run.seed),
            run.scorer,
            f"{100 * run.id_accuracy:.2f}",
            f"{100 * run.near_auroc:.2f}",
            f"{100 * run.far_auroc:.2f}",
        )
    return table
