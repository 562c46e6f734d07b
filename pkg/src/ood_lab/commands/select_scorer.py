from pathlib import Path
from typing import Optional

import click
import typer
from rich.table import Table

from ..core.experiment import discover_runs, experiment_dir, select_scorer, validate_scorers
from ..utils import console, fail, goodbye, resolve_config, resolve_out

app = typer.Typer()


@app.command(
    name="select-scorer",
    help="Rank OOD scoring rules by validation AUROC (id_val against near-OOD).",
)
def select_scorer_command(
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="Experiment config JSON"),
    preset: Optional[str] = typer.Option(None, "--preset", "-p", help="Named preset"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Base seed override"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
):
    """
    Score the validation split of every trained run with each rule the model supports.
    """
    try:
        experiment = resolve_config(config, preset, seed=seed)
        runs = discover_runs(experiment_dir(resolve_out(out), experiment))
        per_run = []
        for paths in runs:
            with console.status(
                f"[bold blue]🔎 Validating scorers of run {paths.run_index}...", spinner="dots"
            ):
                per_run.append(validate_scorers(paths))
        best, means = select_scorer(per_run)

        table = Table(title="🎯 Validation AUROC", show_header=True, header_style="bold blue")
        table.add_column("Scorer", style="green")
        table.add_column("Mean AUROC (%)", style="yellow", justify="right")
        for rule, value in means.items():
            table.add_row(str(rule), f"{100 * value:.2f}")
        console.print(table)
        console.print(
            f"✅ Best rule: {best} (set \"scorer\": \"{best}\" in the config)",
            style="green bold",
        )

    except (click.exceptions.Abort, KeyboardInterrupt):
        goodbye()
    except Exception as e:
        fail(e, "select-scorer")
