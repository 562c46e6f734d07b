from pathlib import Path
from typing import Optional

import click
import typer
from rich.panel import Panel
from rich.table import Table

from ..core.datasets import save_csv
from ..core.experiment import experiment_dir, prepare_data
from ..core.numerics import run_seed
from ..utils import console, fail, goodbye, resolve_config, resolve_out

app = typer.Typer()


@app.command(name="gen-data", help="Generate (or load and split) the datasets of one run.")
def gen_data_command(
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="Experiment config JSON"),
    preset: Optional[str] = typer.Option(None, "--preset", "-p", help="Named preset"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Base seed override"),
    run_index: int = typer.Option(0, "--run", min=0, help="Run index (seed = base + run)"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
):
    """
    Write id_train/id_val/id_test/near_ood/far_ood CSV files for one seed.
    """
    try:
        experiment = resolve_config(config, preset, seed=seed)
        data_seed = run_seed(experiment.seed, run_index)
        target = experiment_dir(resolve_out(out), experiment) / "data" / f"run_{run_index}"

        with console.status("[bold blue]🎲 Generating datasets...", spinner="dots"):
            data = prepare_data(experiment, data_seed)
            datasets = [data.train, data.val, data.test, data.near, data.far]
            paths = [save_csv(d, target / f"{d.role}.csv") for d in datasets]

        table = Table(title="📦 Datasets", show_header=True, header_style="bold blue")
        table.add_column("Role", style="green")
        table.add_column("Examples", style="yellow", justify="right")
        table.add_column("File", style="cyan")
        for dataset, path in zip(datasets, paths):
            table.add_row(str(dataset.role), str(len(dataset)), str(path))
        console.print(table)
        console.print(
            Panel(
                f"[bold]Experiment:[/bold] {experiment.name}\n"
                f"[bold]Seed:[/bold] {data_seed}\n"
                f"[bold]Classes:[/bold] {data.train.num_classes}\n"
                f"[bold]Features:[/bold] {data.train.dim}",
                title="✅ Data written",
                border_style="green",
            )
        )

    except (click.exceptions.Abort, KeyboardInterrupt):
        goodbye()
    except Exception as e:
        fail(e, "gen-data")
