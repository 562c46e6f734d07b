from pathlib import Path
from typing import Optional

import click
import typer

from ..core.experiment import (
    discover_runs,
    evaluate_saved_run,
    experiment_dir,
    write_experiment_metrics,
)
from ..core.models import record_runs
from ..utils import console, fail, goodbye, metrics_table, resolve_config, resolve_out

app = typer.Typer()


@app.command(name="eval", help="Compute ID accuracy and AUROC from saved scores.")
def eval_command(
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="Experiment config JSON"),
    preset: Optional[str] = typer.Option(None, "--preset", "-p", help="Named preset"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Base seed override"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
):
    """
    Evaluate every scored run, write metrics files and update the run registry.
    """
    try:
        experiment = resolve_config(config, preset, seed=seed)
        out_dir = resolve_out(out)
        exp_dir = experiment_dir(out_dir, experiment)
        metrics = [evaluate_saved_run(paths) for paths in discover_runs(exp_dir)]
        write_experiment_metrics(exp_dir, metrics)
        record_runs(out_dir, metrics)

        console.print(metrics_table(f"📊 {experiment.name}", metrics))
        console.print(f"\n💾 Metrics written to {exp_dir}", style="dim")

    except (click.exceptions.Abort, KeyboardInterrupt):
        goodbye()
    except Exception as e:
        fail(e, "eval")
