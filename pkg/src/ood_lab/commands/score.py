from pathlib import Path
from typing import Optional

import click
import typer

from ..core.experiment import discover_runs, experiment_dir, score_saved_run
from ..utils import console, fail, goodbye, resolve_config, resolve_out

app = typer.Typer()


@app.command(name="score", help="Score id_test, near-OOD and far-OOD data with trained runs.")
def score_command(
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="Experiment config JSON"),
    preset: Optional[str] = typer.Option(None, "--preset", "-p", help="Named preset"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Base seed override"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
):
    """
    Write scores.csv for every trained run of an experiment.
    """
    try:
        experiment = resolve_config(config, preset, seed=seed)
        runs = discover_runs(experiment_dir(resolve_out(out), experiment))
        for paths in runs:
            with console.status(
                f"[bold blue]🔍 Scoring run {paths.run_index}...", spinner="dots"
            ):
                written = score_saved_run(paths)
            console.print(f"📝 {written}", style="dim")
        console.print(
            f"✅ Scored {len(runs)} run(s) with {experiment.resolved_scorer}", style="green bold"
        )

    except (click.exceptions.Abort, KeyboardInterrupt):
        goodbye()
    except Exception as e:
        fail(e, "score")
