from pathlib import Path
from typing import Optional

import click
import typer
from rich.panel import Panel

from ..core.experiment import RunFailure, experiment_dir, run_experiment
from ..utils import console, fail, goodbye, metrics_table, resolve_config, resolve_out

app = typer.Typer()


@app.command(name="run", help="Run a full multi-seed experiment: data, training, scoring, metrics.")
def run_command(
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="Experiment config JSON"),
    preset: Optional[str] = typer.Option(None, "--preset", "-p", help="Named preset"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Base seed override"),
    runs: Optional[int] = typer.Option(None, "--runs", min=1, help="Number of runs override"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
):
    """
    Execute every run of one experiment and record the results.
    """
    try:
        experiment = resolve_config(config, preset, seed=seed, runs=runs)
        out_dir = resolve_out(out)

        def report(run_index, outcome):
            if isinstance(outcome, RunFailure):
                console.print(f"⚠️ Run {run_index} failed: {outcome.message}", style="yellow")
            else:
                console.print(f"✅ Run {run_index} (seed {outcome.seed}) done", style="green")

        with console.status(
            f"[bold blue]🚀 Running {experiment.name} ({experiment.runs} runs)...", spinner="dots"
        ):
            result = run_experiment(experiment, out_dir, on_run=report)

        if result.metrics:
            console.print(metrics_table(f"📊 {experiment.name}", result.metrics))
        console.print(
            Panel(
                f"[bold]Objective:[/bold] {experiment.objective.title}\n"
                f"[bold]Scorer:[/bold] {experiment.resolved_scorer}\n"
                f"[bold]Successful runs:[/bold] {len(result.metrics)}/{experiment.runs}\n"
                f"[bold]Output:[/bold] {experiment_dir(out_dir, experiment)}",
                title="🧪 Experiment",
                border_style="green" if not result.failures else "yellow",
                padding=(1, 2),
            )
        )
        if not result.metrics:
            raise RuntimeError(f"all {experiment.runs} runs of {experiment.name} failed")

    except (click.exceptions.Abort, KeyboardInterrupt):
        goodbye()
    except Exception as e:
        fail(e, "run")
