from pathlib import Path
from typing import Optional

import click
import typer
from rich.table import Table

from ..core.experiment import run_paths, save_training, train_run
from ..utils import console, fail, goodbye, resolve_config, resolve_out

app = typer.Typer()


@app.command(name="train", help="Train every run of an experiment and save checkpoints.")
def train_command(
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="Experiment config JSON"),
    preset: Optional[str] = typer.Option(None, "--preset", "-p", help="Named preset"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Base seed override"),
    runs: Optional[int] = typer.Option(None, "--runs", min=1, help="Number of runs override"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
):
    """
    Train the network of each run and write config.json, checkpoint.json and training.json.
    """
    try:
        experiment = resolve_config(config, preset, seed=seed, runs=runs)
        out_dir = resolve_out(out)
        console.print(
            f"🏋️ Training {experiment.objective.title} ({experiment.name}), "
            f"{experiment.runs} run(s)",
            style="blue bold",
        )

        table = Table(title="📈 Training", show_header=True, header_style="bold blue")
        table.add_column("Run", style="cyan", width=5)
        table.add_column("Final loss", style="yellow", justify="right")
        table.add_column("Skipped batches", style="magenta", justify="right")
        table.add_column("Checkpoint", style="green")

        for run_index in range(experiment.runs):
            with console.status(
                f"[bold blue]⚙️ Training run {run_index}...", spinner="dots"
            ):
                trained, _ = train_run(experiment, run_index)
                paths = run_paths(out_dir, experiment, run_index)
                save_training(paths, experiment, trained)
            losses = [loss for loss in trained.diagnostics.epoch_losses if loss is not None]
            table.add_row(
                str(run_index),
                f"{losses[-1]:.4f}" if losses else "n/a",
                str(trained.diagnostics.skipped_batches),
                str(paths.checkpoint),
            )

        console.print(table)
        console.print("✅ Training complete", style="green bold")

    except (click.exceptions.Abort, KeyboardInterrupt):
        goodbye()
    except Exception as e:
        fail(e, "train")
